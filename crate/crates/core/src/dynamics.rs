//! Deterministic per-slot laws: semantic age-of-information evolution, beam
//! misalignment probability, and the two-part energy model.
//!
//! Everything in this module is a pure function of its arguments; no state,
//! no randomness.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Per-user semantic age of information, in slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AoIVector<T: Scalar> {
    /// Current age of each user's last accepted visual calibration.
    pub ages: Vec<T>,
    /// Visual pipeline processing delay; the floor every age resets to.
    pub processing_delay: T,
}

impl<T: Scalar> AoIVector<T> {
    /// All users start freshly calibrated (age == processing delay).
    pub fn fresh(user_count: usize, processing_delay: T) -> Self {
        Self {
            ages: vec![processing_delay; user_count],
            processing_delay,
        }
    }

    pub fn user_count(&self) -> usize {
        self.ages.len()
    }
}

/// Reliability-side parameters: uncertainty growth rates and the two caps.
#[derive(Debug, Clone)]
pub struct ReliabilityParams<T: Scalar> {
    /// Kinematic uncertainty rate per user, per slot.
    pub uncertainty_rates: Vec<T>,
    /// Maximum tolerable average misalignment probability.
    pub bmp_threshold: T,
    /// Hard cap on any user's age, in slots.
    pub aoi_cap: T,
}

impl<T: Scalar> ReliabilityParams<T> {
    pub fn validate(&self, processing_delay: T) -> Result<()> {
        if self.uncertainty_rates.iter().any(|b| *b <= T::zero()) {
            return Err(Error::Config("uncertainty rates must be positive".into()));
        }
        if self.bmp_threshold <= T::zero() || self.bmp_threshold >= T::one() {
            return Err(Error::Config("bmp_threshold must lie in (0, 1)".into()));
        }
        if self.aoi_cap <= processing_delay {
            return Err(Error::Config("aoi_cap must exceed the processing delay".into()));
        }
        Ok(())
    }
}

/// Per-slot energy, split into its two sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T: Scalar> {
    /// Visual processing energy.
    pub computational: T,
    /// Expected beam-recovery sweep energy.
    pub sweep: T,
    /// Sum of the two components.
    pub total: T,
}

/// Age update: a scheduled user resets to the processing delay, everyone
/// else ages by one slot.
pub fn update_aoi<T: Scalar>(ages: &AoIVector<T>, schedule: &[bool]) -> Result<AoIVector<T>> {
    if schedule.len() != ages.user_count() {
        return Err(Error::Shape(format!(
            "schedule has {} entries for {} users",
            schedule.len(),
            ages.user_count()
        )));
    }
    let next = ages
        .ages
        .iter()
        .zip(schedule)
        .map(|(&a, &s)| if s { ages.processing_delay } else { a + T::one() })
        .collect();
    Ok(AoIVector {
        ages: next,
        processing_delay: ages.processing_delay,
    })
}

/// Beam misalignment probability as a saturating function of age:
/// `1 - exp(-beta * age)`.
pub fn misalignment_prob<T: Scalar>(age: T, beta: T) -> Result<T> {
    if age < T::zero() {
        return Err(Error::Domain(format!("negative age {}", age)));
    }
    if beta <= T::zero() {
        return Err(Error::Domain(format!("non-positive beta {}", beta)));
    }
    Ok(T::one() - (-beta * age).exp())
}

/// Misalignment probabilities for a whole age vector.
pub fn misalignment_probs<T: Scalar>(
    ages: &AoIVector<T>,
    params: &ReliabilityParams<T>,
) -> Result<Vec<T>> {
    if params.uncertainty_rates.len() != ages.user_count() {
        return Err(Error::Shape("uncertainty rate count != user count".into()));
    }
    ages.ages
        .iter()
        .zip(&params.uncertainty_rates)
        .map(|(&a, &b)| misalignment_prob(a, b))
        .collect()
}

/// Visual computation energy: one fixed frame cost per scheduled user.
pub fn comp_energy<T: Scalar>(schedule: &[bool], per_frame_energy: T) -> T {
    let active = schedule.iter().filter(|&&s| s).count();
    per_frame_energy * T::of(active as f64)
}

/// Expected sweep-recovery energy: recovery cost weighted by each user's
/// misalignment probability. Expected-value formulation; nothing is sampled.
pub fn sweep_energy<T: Scalar>(misalignment_probs: &[T], recovery_energy: T) -> T {
    let p_sum: T = misalignment_probs.iter().copied().sum();
    recovery_energy * p_sum
}

/// Total energy with the breakdown retained.
pub fn total_energy<T: Scalar>(comp: T, sweep: T) -> EnergyBreakdown<T> {
    EnergyBreakdown {
        computational: comp,
        sweep,
        total: comp + sweep,
    }
}

/// Arithmetic mean of the per-user misalignment probabilities.
pub fn average_bmp<T: Scalar>(misalignment_probs: &[T]) -> T {
    if misalignment_probs.is_empty() {
        return T::zero();
    }
    let sum: T = misalignment_probs.iter().copied().sum();
    sum / T::of(misalignment_probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn aoi(ages: &[f64], t_proc: f64) -> AoIVector<f64> {
        AoIVector {
            ages: ages.to_vec(),
            processing_delay: t_proc,
        }
    }

    #[test]
    fn aoi_reset_and_growth() {
        let next = update_aoi(&aoi(&[5.0, 3.0], 1.0), &[true, false]).unwrap();
        assert_eq!(next.ages, vec![1.0, 4.0]);
    }

    #[test]
    fn aoi_all_scheduled_resets_everyone() {
        let next = update_aoi(&aoi(&[7.0, 12.0, 2.0], 1.0), &[true, true, true]).unwrap();
        assert_eq!(next.ages, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn aoi_never_scheduled_grows_linearly() {
        let mut a = AoIVector::fresh(2, 1.0);
        for _ in 0..10 {
            a = update_aoi(&a, &[false, false]).unwrap();
        }
        assert_eq!(a.ages, vec![11.0, 11.0]);
    }

    #[test]
    fn aoi_schedule_length_checked() {
        assert!(update_aoi(&aoi(&[1.0], 1.0), &[true, false]).is_err());
    }

    #[test]
    fn bmp_zero_age_is_zero() {
        assert_eq!(misalignment_prob(0.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn bmp_closed_form() {
        let p = misalignment_prob(10.0, 0.1).unwrap();
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.632121).abs() < 1e-6);
    }

    #[test]
    fn bmp_saturates_below_one() {
        // beta * A = 50: within 1e-21 of the asymptote but never above it.
        let p = misalignment_prob(500.0, 0.1).unwrap();
        assert!(p >= 1.0 - 1e-21);
        assert!(p <= 1.0);
    }

    #[test]
    fn bmp_rejects_negative_age() {
        assert!(misalignment_prob(-1.0, 0.1).is_err());
    }

    #[test]
    fn comp_energy_counts_scheduled() {
        assert_eq!(comp_energy(&[true, true, true, true], 10.0), 40.0);
        assert_eq!(comp_energy(&[false, false, false, false], 10.0), 0.0);
        assert_eq!(comp_energy(&[true, false, true, false], 10.0), 20.0);
    }

    #[test]
    fn sweep_energy_expected_value() {
        assert_eq!(sweep_energy(&[1.0, 1.0, 1.0, 1.0], 25.0), 100.0);
        assert_eq!(sweep_energy(&[0.0, 0.0, 0.0, 0.0], 25.0), 0.0);
        assert_eq!(sweep_energy(&[0.5, 0.5, 0.0, 0.0], 25.0), 25.0);
    }

    #[test]
    fn total_energy_breakdown() {
        assert_eq!(total_energy(40.0, 0.0).total, 40.0);
        assert_eq!(total_energy(0.0, 100.0).total, 100.0);
        let e = total_energy(20.0f64, 31.6);
        assert!((e.total - 51.6).abs() < 1e-12);
    }

    #[test]
    fn average_bmp_values() {
        assert_eq!(average_bmp(&[0.0, 0.0, 0.0, 0.0]), 0.0);
        assert_eq!(average_bmp(&[1.0, 1.0, 1.0, 1.0]), 1.0);
        assert!((average_bmp(&[0.2f64, 0.4, 0.6, 0.8]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn steady_state_ceiling_under_full_scheduling() {
        // Under pi == 1 every age sits at t_proc, so per-slot total energy is
        // K*e_vis + K*E_rec*(1 - exp(-beta*t_proc)).
        let k = 4;
        let (e_vis, e_rec, beta, t_proc) = (10.0, 25.0, 0.05f64, 1.0);
        let params = ReliabilityParams {
            uncertainty_rates: vec![beta; k],
            bmp_threshold: 0.3,
            aoi_cap: 20.0,
        };
        let mut ages = AoIVector::fresh(k, t_proc);
        let schedule = vec![true; k];
        for _ in 0..5 {
            let probs = misalignment_probs(&ages, &params).unwrap();
            let e = total_energy(comp_energy(&schedule, e_vis), sweep_energy(&probs, e_rec));
            let expect = k as f64 * e_vis + k as f64 * e_rec * (1.0 - (-beta * t_proc).exp());
            assert!((e.total - expect).abs() < 1e-12);
            ages = update_aoi(&ages, &schedule).unwrap();
        }
    }

    #[test]
    fn sweep_energy_approaches_ceiling_without_scheduling() {
        let k = 4;
        let params = ReliabilityParams {
            uncertainty_rates: vec![0.05; k],
            bmp_threshold: 0.3,
            aoi_cap: 20.0,
        };
        let mut ages = AoIVector::fresh(k, 1.0);
        let mut sweep = 0.0;
        for _ in 0..2000 {
            let probs = misalignment_probs(&ages, &params).unwrap();
            sweep = sweep_energy(&probs, 25.0);
            ages = update_aoi(&ages, &vec![false; k]).unwrap();
        }
        assert!((sweep - k as f64 * 25.0).abs() < 1e-6);
    }

    #[test]
    fn generic_over_f32() {
        let p = misalignment_prob(10.0f32, 0.1f32).unwrap();
        assert!((p - 0.632121f32).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn aoi_dichotomy(ages in proptest::collection::vec(1.0f64..50.0, 1..8),
                         sched in proptest::collection::vec(any::<bool>(), 8)) {
            let t_proc = 1.0;
            let a = aoi(&ages, t_proc);
            let sched = &sched[..ages.len()];
            let next = update_aoi(&a, sched).unwrap();
            for (i, (&before, &after)) in a.ages.iter().zip(&next.ages).enumerate() {
                prop_assert!(after == t_proc || after == before + 1.0);
                prop_assert_eq!(after == t_proc && before + 1.0 != t_proc, sched[i]);
            }
        }

        #[test]
        // Ranges keep beta * age < ~30 so the exponential stays resolvable
        // in f64 and strict monotonicity is meaningful.
        fn bmp_monotone_in_age_and_beta(a1 in 0.0f64..20.0, da in 0.01f64..10.0,
                                        b1 in 0.001f64..0.5, db in 0.001f64..0.5) {
            let base = misalignment_prob(a1, b1).unwrap();
            prop_assert!(misalignment_prob(a1 + da, b1).unwrap() > base);
            prop_assert!(misalignment_prob(a1, b1 + db).unwrap() >= base);
            if a1 > 0.0 {
                prop_assert!(misalignment_prob(a1, b1 + db).unwrap() > base);
            }
        }

        #[test]
        fn energy_linearity(probs in proptest::collection::vec(0.0f64..1.0, 1..8),
                            e_rec in 0.0f64..100.0) {
            let whole = sweep_energy(&probs, e_rec);
            let split: f64 = probs.iter().map(|&p| sweep_energy(&[p], e_rec)).sum();
            prop_assert!((whole - split).abs() < 1e-9);
        }
    }
}
