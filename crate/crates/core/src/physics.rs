//! mmWave physics kernel: vehicle kinematics, geometric multipath channels,
//! radar observations, and the signal-level quantities built on them.
//!
//! All randomness enters through an explicit `Rng`, so every quantity is a
//! pure function of its arguments plus the generator state.

use crate::error::{Error, Result};
use crate::num::Scalar;
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use std::f64::consts::PI;

/// Uniform linear array geometry.
#[derive(Debug, Clone)]
pub struct ArrayConfig<T: Scalar> {
    /// Number of antenna elements (M).
    pub element_count: usize,
    /// Carrier frequency in Hz.
    pub carrier_frequency: T,
    /// Element spacing as a fraction of the carrier wavelength.
    pub element_spacing: T,
}

impl<T: Scalar> ArrayConfig<T> {
    pub fn new(element_count: usize, carrier_frequency: T, element_spacing: T) -> Result<Self> {
        if element_count < 1 {
            return Err(Error::Config("element_count must be >= 1".into()));
        }
        if carrier_frequency <= T::zero() {
            return Err(Error::Config("carrier_frequency must be positive".into()));
        }
        if element_spacing <= T::zero() || element_spacing > T::one() {
            return Err(Error::Config("element_spacing must lie in (0, 1]".into()));
        }
        Ok(Self {
            element_count,
            carrier_frequency,
            element_spacing,
        })
    }

    /// Half-wavelength 64-element array at 28 GHz.
    pub fn default_ula() -> Self {
        Self {
            element_count: 64,
            carrier_frequency: T::of(28e9),
            element_spacing: T::of(0.5),
        }
    }
}

/// Ground-truth kinematic state of one vehicle.
#[derive(Debug, Clone)]
pub struct VehicleTruth<T: Scalar> {
    /// True departure angle from array boresight, radians.
    pub angle: T,
    /// True radial distance, meters.
    pub distance: T,
    /// Radial velocity, meters per slot.
    pub radial_velocity: T,
    /// Angular velocity, radians per slot.
    pub angular_velocity: T,
    /// Accumulated radar bias; resets to zero on visual calibration.
    pub radar_bias: T,
}

/// One resolved propagation path.
#[derive(Debug, Clone, Copy)]
pub struct PathComponent<T: Scalar> {
    /// Complex path gain with the delay phase already folded in.
    pub gain: Complex<T>,
    /// Propagation delay, seconds.
    pub delay: T,
    /// Departure angle, radians.
    pub departure_angle: T,
}

/// True and estimated channel matrices for one slot.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T: Scalar> {
    /// K x M true channel, one row per user.
    pub true_channel: Vec<Vec<Complex<T>>>,
    /// K x M estimated channel (true minus the drawn misalignment error).
    pub estimated_channel: Vec<Vec<Complex<T>>>,
    /// Population variance of each user's drawn error.
    pub error_variance: Vec<T>,
}

/// Noisy kinematic estimate from the radar front end.
#[derive(Debug, Clone, Copy)]
pub struct RadarObservation<T: Scalar> {
    pub angle_estimate: T,
    pub distance_estimate: T,
}

/// Mobility and bias-drift parameters; the paper only calls the vehicles
/// "highly mobile", so the concrete law lives here.
#[derive(Debug, Clone)]
pub struct MobilityParams<T: Scalar> {
    /// Slot duration in the time unit the velocities are expressed in.
    pub slot_duration: T,
    /// Per-slot angle process noise, radians.
    pub angle_noise_std: T,
    /// Per-slot distance process noise, meters.
    pub distance_noise_std: T,
    /// Per-slot radar bias random-walk step, radians.
    pub bias_walk_std: T,
    /// Angles are reflected back into (-fov, fov).
    pub field_of_view: T,
    /// Distances are reflected off this floor.
    pub min_distance: T,
}

impl<T: Scalar> Default for MobilityParams<T> {
    fn default() -> Self {
        Self {
            slot_duration: T::one(),
            angle_noise_std: T::of(0.002),
            distance_noise_std: T::of(0.1),
            bias_walk_std: T::of(0.004),
            field_of_view: T::of(PI / 3.0),
            min_distance: T::of(5.0),
        }
    }
}

/// Radar measurement noise.
#[derive(Debug, Clone, Copy)]
pub struct RadarNoise<T: Scalar> {
    pub angle_std: T,
    pub distance_std: T,
}

impl<T: Scalar> Default for RadarNoise<T> {
    fn default() -> Self {
        Self {
            angle_std: T::of(0.01),
            distance_std: T::of(0.5),
        }
    }
}

/// Distance at which the line-of-sight path has unit amplitude.
pub const LOS_REFERENCE_DISTANCE_M: f64 = 50.0;
/// Non-line-of-sight power relative to the line-of-sight path.
pub const NLOS_RELATIVE_POWER: f64 = 0.1;

fn draw_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::of(x)
}

/// ULA steering vector: element m carries phase `2*pi*spacing*m*sin(angle)`.
pub fn steering_vector<T: Scalar>(angle: T, config: &ArrayConfig<T>) -> Result<Vec<Complex<T>>> {
    let half_pi = T::of(PI / 2.0);
    if angle <= -half_pi || angle >= half_pi {
        return Err(Error::Domain(format!(
            "steering angle {} outside (-pi/2, pi/2)",
            angle
        )));
    }
    let two_pi = T::of(2.0 * PI);
    let step = two_pi * config.element_spacing * angle.sin();
    Ok((0..config.element_count)
        .map(|m| Complex::from_polar(T::one(), step * T::of(m as f64)))
        .collect())
}

/// Line-of-sight amplitude under free-space 1/d scaling, normalized so a
/// user at the reference distance has unit amplitude.
pub fn los_amplitude<T: Scalar>(distance: T) -> T {
    T::of(LOS_REFERENCE_DISTANCE_M) / distance
}

/// Draw the geometric multipath channel (true part only). Path 1 is the
/// line-of-sight path at the vehicle's true angle with a deterministic
/// distance-dependent gain; the remaining paths get circular complex
/// Gaussian gains at -10 dB relative power and uniform random angles.
pub fn sample_channel<T: Scalar, R: Rng + ?Sized>(
    vehicles: &[VehicleTruth<T>],
    config: &ArrayConfig<T>,
    path_count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Complex<T>>>> {
    if path_count < 1 {
        return Err(Error::Domain("path_count must be >= 1".into()));
    }
    let angle_range = Uniform::new(-0.99 * PI / 2.0, 0.99 * PI / 2.0);
    let mut rows = Vec::with_capacity(vehicles.len());
    for v in vehicles {
        if v.distance <= T::zero() {
            return Err(Error::Domain("vehicle distance must be positive".into()));
        }
        let los_amp = los_amplitude(v.distance);
        let mut row = steering_vector(v.angle, config)?;
        for e in row.iter_mut() {
            *e = *e * los_amp;
        }
        // NLoS component std per complex dimension: power split across re/im.
        let nlos_std = los_amp * T::of((NLOS_RELATIVE_POWER / 2.0).sqrt());
        for _ in 1..path_count {
            let theta = T::of(angle_range.sample(rng));
            let gain = Complex::new(draw_normal::<T, _>(rng), draw_normal::<T, _>(rng)) * nlos_std;
            let sv = steering_vector(theta, config)?;
            for (e, s) in row.iter_mut().zip(sv) {
                *e = *e + gain * s;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Draw the misalignment-induced estimation error and return the paired
/// true/estimated realization. Each user's error is zero-mean circular
/// complex Gaussian with total variance `rho * p_misa` spread evenly over
/// the M entries. The generator is advanced identically regardless of the
/// variance, so paired-seed runs stay aligned across policies.
pub fn apply_channel_error<T: Scalar, R: Rng + ?Sized>(
    true_channel: &[Vec<Complex<T>>],
    misalignment_probs: &[T],
    rho: T,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    if rho < T::zero() {
        return Err(Error::Domain(format!("rho must be nonnegative, got {}", rho)));
    }
    if true_channel.len() != misalignment_probs.len() {
        return Err(Error::Shape("one misalignment prob per channel row required".into()));
    }
    let mut estimated = Vec::with_capacity(true_channel.len());
    let mut variances = Vec::with_capacity(true_channel.len());
    for (row, &p) in true_channel.iter().zip(misalignment_probs) {
        if p < T::zero() || p > T::one() {
            return Err(Error::Domain("misalignment prob outside [0, 1]".into()));
        }
        let m = row.len();
        let var_total = rho * p;
        // Per-entry, per-dimension std so that E||dh||^2 == var_total.
        let std = (var_total / T::of(2.0 * m as f64)).sqrt();
        let est_row = row
            .iter()
            .map(|&h| {
                let dh = Complex::new(draw_normal::<T, _>(rng), draw_normal::<T, _>(rng)) * std;
                h - dh
            })
            .collect();
        estimated.push(est_row);
        variances.push(var_total);
    }
    Ok(ChannelRealization {
        true_channel: true_channel.to_vec(),
        estimated_channel: estimated,
        error_variance: variances,
    })
}

/// Squared modulus of the inner product `h^H v`.
pub fn beam_gain<T: Scalar>(channel_row: &[Complex<T>], beam: &[Complex<T>]) -> Result<T> {
    if channel_row.len() != beam.len() {
        return Err(Error::Shape(format!(
            "channel row length {} != beam length {}",
            channel_row.len(),
            beam.len()
        )));
    }
    let g = inner_product(channel_row, beam);
    Ok(g.norm_sqr())
}

/// `h^H v` without the modulus.
pub fn inner_product<T: Scalar>(channel_row: &[Complex<T>], beam: &[Complex<T>]) -> Complex<T> {
    channel_row
        .iter()
        .zip(beam)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (h, v)| acc + h.conj() * v)
}

/// Downlink SINR for user k under a common power scale applied to every beam.
pub fn sinr<T: Scalar>(
    channel: &[Vec<Complex<T>>],
    beams: &[Vec<Complex<T>>],
    user: usize,
    noise_power: T,
    power_scale: T,
) -> Result<T> {
    if noise_power <= T::zero() {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    if user >= channel.len() || channel.len() != beams.len() {
        return Err(Error::Shape("user index / beam count mismatch".into()));
    }
    let scale_sq = power_scale * power_scale;
    let row = &channel[user];
    let signal = scale_sq * beam_gain(row, &beams[user])?;
    let mut interference = T::zero();
    for (j, beam) in beams.iter().enumerate() {
        if j != user {
            interference += scale_sq * beam_gain(row, beam)?;
        }
    }
    Ok(signal / (interference + noise_power))
}

/// One slot of vehicle motion: linear angle/distance integration plus
/// per-slot Gaussian position noise, with the radar bias performing its own
/// random walk. Angles and distances reflect at the configured limits.
pub fn advance_vehicles<T: Scalar, R: Rng + ?Sized>(
    vehicles: &mut [VehicleTruth<T>],
    params: &MobilityParams<T>,
    rng: &mut R,
) -> Result<()> {
    if params.slot_duration <= T::zero() {
        return Err(Error::Domain("slot_duration must be positive".into()));
    }
    for v in vehicles.iter_mut() {
        let dt = params.slot_duration;
        v.angle = v.angle + v.angular_velocity * dt + draw_normal::<T, _>(rng) * params.angle_noise_std;
        v.distance =
            v.distance + v.radial_velocity * dt + draw_normal::<T, _>(rng) * params.distance_noise_std;
        v.radar_bias = v.radar_bias + draw_normal::<T, _>(rng) * params.bias_walk_std;

        if v.angle > params.field_of_view {
            v.angle = params.field_of_view;
            v.angular_velocity = -v.angular_velocity;
        } else if v.angle < -params.field_of_view {
            v.angle = -params.field_of_view;
            v.angular_velocity = -v.angular_velocity;
        }
        if v.distance < params.min_distance {
            v.distance = params.min_distance;
            v.radial_velocity = -v.radial_velocity;
        }
    }
    Ok(())
}

/// Radar measurement: truth plus accumulated bias plus white noise; the
/// distance estimate is clamped positive.
pub fn radar_observe<T: Scalar, R: Rng + ?Sized>(
    vehicle: &VehicleTruth<T>,
    noise: &RadarNoise<T>,
    rng: &mut R,
) -> RadarObservation<T> {
    let angle = vehicle.angle + vehicle.radar_bias + draw_normal::<T, _>(rng) * noise.angle_std;
    let distance = vehicle.distance + draw_normal::<T, _>(rng) * noise.distance_std;
    RadarObservation {
        angle_estimate: angle,
        distance_estimate: distance.max(T::of(0.1)),
    }
}

/// dBm to Watts.
pub fn dbm_to_watts<T: Scalar>(dbm: T) -> T {
    T::of(10.0).powf(dbm / T::of(10.0)) / T::of(1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn cfg(m: usize) -> ArrayConfig<f64> {
        ArrayConfig::new(m, 28e9, 0.5).unwrap()
    }

    fn vehicle(angle: f64, distance: f64) -> VehicleTruth<f64> {
        VehicleTruth {
            angle,
            distance,
            radial_velocity: 0.0,
            angular_velocity: 0.0,
            radar_bias: 0.0,
        }
    }

    #[test]
    fn steering_at_boresight_is_all_ones() {
        let sv = steering_vector(0.0, &cfg(4)).unwrap();
        for e in sv {
            assert!((e - Complex::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_30_degrees_two_elements() {
        // 2*pi*0.5*1*sin(pi/6) = pi/2, so the second element is j.
        let sv = steering_vector(PI / 6.0, &cfg(2)).unwrap();
        assert!((sv[0] - Complex::new(1.0, 0.0)).norm() < 1e-12);
        assert!((sv[1] - Complex::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_rejects_out_of_range() {
        assert!(steering_vector(PI / 2.0, &cfg(4)).is_err());
        assert!(steering_vector(-2.0, &cfg(4)).is_err());
    }

    #[test]
    fn single_path_collapses_to_steering_vector() {
        // L_p = 1 at the reference distance: unit LoS gain, row == a(theta).
        let v = vehicle(0.3, LOS_REFERENCE_DISTANCE_M);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let rows = sample_channel(&[v.clone()], &cfg(8), 1, &mut rng).unwrap();
        let sv = steering_vector(v.angle, &cfg(8)).unwrap();
        for (a, b) in rows[0].iter().zip(&sv) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn channel_deterministic_under_seed() {
        let vs = vec![vehicle(0.1, 30.0), vehicle(-0.4, 80.0)];
        let a = sample_channel(&vs, &cfg(16), 3, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
        let b = sample_channel(&vs, &cfg(16), 3, &mut ChaCha12Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn channel_shape_and_finiteness() {
        let vs: Vec<_> = (0..4).map(|i| vehicle(0.1 * i as f64, 40.0 + 10.0 * i as f64)).collect();
        let rows = sample_channel(&vs, &cfg(64), 3, &mut ChaCha12Rng::seed_from_u64(1)).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert_eq!(row.len(), 64);
            assert!(row.iter().all(|e| e.re.is_finite() && e.im.is_finite()));
        }
    }

    #[test]
    fn zero_variance_error_leaves_channel_exact() {
        let vs = vec![vehicle(0.2, 50.0)];
        let rows = sample_channel(&vs, &cfg(8), 2, &mut ChaCha12Rng::seed_from_u64(3)).unwrap();
        let r0 = apply_channel_error(&rows, &[0.0], 0.5, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(r0.true_channel, r0.estimated_channel);
        let r1 = apply_channel_error(&rows, &[0.7], 0.0, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        assert_eq!(r1.true_channel, r1.estimated_channel);
        assert!(apply_channel_error(&rows, &[0.7], -0.1, &mut ChaCha12Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn error_variance_monte_carlo() {
        // E||dh||^2 = rho * p = 0.25, estimated over 1e5 draws within 2%.
        let vs = vec![vehicle(0.0, 50.0)];
        let rows = sample_channel(&vs, &cfg(8), 1, &mut ChaCha12Rng::seed_from_u64(3)).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let r = apply_channel_error(&rows, &[0.5], 0.5, &mut rng).unwrap();
            let norm_sq: f64 = r.true_channel[0]
                .iter()
                .zip(&r.estimated_channel[0])
                .map(|(t, e)| (t - e).norm_sqr())
                .sum();
            acc += norm_sq;
        }
        let mean = acc / draws as f64;
        assert!(
            (mean - 0.25).abs() / 0.25 < 0.02,
            "E||dh||^2 = {mean}, want 0.25 within 2%"
        );
    }

    #[test]
    fn phase_matched_beam_attains_gain_m() {
        // For unit-modulus h, the conjugate-phase beam hits the triangle
        // equality: |h^H v|^2 = M with v entries of modulus 1/sqrt(M).
        let m = 16;
        let h = steering_vector(0.37, &cfg(m)).unwrap();
        let inv_sqrt_m = 1.0 / (m as f64).sqrt();
        let v: Vec<_> = h.iter().map(|e| Complex::from_polar(inv_sqrt_m, e.arg())).collect();
        let gain = beam_gain(&h, &v).unwrap();
        assert!((gain - m as f64).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_beam_has_zero_gain() {
        let h = vec![Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)];
        let v = vec![Complex::new(1.0, 0.0), Complex::new(-1.0, 0.0)];
        assert_eq!(beam_gain(&h, &v).unwrap(), 0.0);
        assert!(beam_gain(&h, &v[..1]).is_err());
    }

    #[test]
    fn matched_phase_beats_exhaustive_phase_search() {
        // Brute-force 1024 random constant-modulus beams on M = 4; none may
        // exceed the conjugate-phase-matched beam.
        let m = 4;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let vs = vec![vehicle(0.21, 35.0)];
        let h = sample_channel(&vs, &cfg(m), 3, &mut rng).unwrap().remove(0);
        let inv_sqrt_m = 1.0 / (m as f64).sqrt();
        let matched: Vec<_> = h.iter().map(|e| Complex::from_polar(inv_sqrt_m, e.arg())).collect();
        let best = beam_gain(&h, &matched).unwrap();
        let phase_range = Uniform::new(-PI, PI);
        for _ in 0..1024 {
            let v: Vec<_> = (0..m)
                .map(|_| Complex::from_polar(inv_sqrt_m, phase_range.sample(&mut rng)))
                .collect();
            assert!(beam_gain(&h, &v).unwrap() <= best + 1e-9);
        }
    }

    #[test]
    fn sinr_single_user_no_interference() {
        let h = vec![vec![Complex::new(2.0, 0.0)]];
        let v = vec![vec![Complex::new(1.0, 0.0)]];
        let noise: f64 = dbm_to_watts(-114.0);
        let s = sinr(&h, &v, 0, noise, 0.5).unwrap();
        assert!((s - 0.25 * 4.0 / noise).abs() / s < 1e-12);
    }

    #[test]
    fn sinr_identical_beams_bounded_by_symmetry() {
        // All users share one beam and one channel: SINR = g/( (K-1) g + n )
        // which is below 1/(K-1) for any positive noise.
        let k = 4;
        let h_row: Vec<_> = steering_vector(0.1, &cfg(8)).unwrap();
        let beam: Vec<_> = h_row.iter().map(|e| e / (8.0f64).sqrt()).collect();
        let channel: Vec<_> = (0..k).map(|_| h_row.clone()).collect();
        let beams: Vec<_> = (0..k).map(|_| beam.clone()).collect();
        let s = sinr(&channel, &beams, 0, 1e-9, 1.0).unwrap();
        assert!(s < 1.0 / (k as f64 - 1.0));
    }

    #[test]
    fn noise_power_conversion() {
        let w = dbm_to_watts(-114.0);
        assert!((w - 10f64.powf(-114.0 / 10.0) / 1000.0).abs() < 1e-30);
        assert!((dbm_to_watts(30.0f64) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn advance_without_noise_is_linear() {
        let mut vs = vec![VehicleTruth {
            angle: 0.0f64,
            distance: 50.0,
            radial_velocity: 0.0,
            angular_velocity: 0.01,
            radar_bias: 0.0,
        }];
        let params = MobilityParams {
            angle_noise_std: 0.0,
            distance_noise_std: 0.0,
            bias_walk_std: 0.0,
            ..MobilityParams::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for _ in 0..10 {
            advance_vehicles(&mut vs, &params, &mut rng).unwrap();
        }
        assert!((vs[0].angle - 0.1).abs() < 1e-12);
        assert_eq!(vs[0].distance, 50.0);
    }

    #[test]
    fn advance_zero_velocity_zero_noise_is_identity() {
        let mut vs = vec![vehicle(0.2, 60.0)];
        let params = MobilityParams {
            angle_noise_std: 0.0,
            distance_noise_std: 0.0,
            bias_walk_std: 0.0,
            ..MobilityParams::default()
        };
        advance_vehicles(&mut vs, &params, &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
        assert_eq!(vs[0].angle, 0.2);
        assert_eq!(vs[0].distance, 60.0);
    }

    #[test]
    fn angle_random_walk_variance() {
        // 1000 independent walks of 1000 slots each would be slow; instead
        // run 300 walks and check the sqrt(n) * sigma law within 10%.
        let n_slots = 1000;
        let n_walks = 300;
        let sigma = 0.002;
        let params = MobilityParams {
            angle_noise_std: sigma,
            distance_noise_std: 0.0,
            bias_walk_std: 0.0,
            field_of_view: 100.0, // keep reflections out of the statistics
            ..MobilityParams::default()
        };
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let mut sq = 0.0;
        for _ in 0..n_walks {
            let mut vs = vec![vehicle(0.0, 50.0)];
            for _ in 0..n_slots {
                advance_vehicles(&mut vs, &params, &mut rng).unwrap();
            }
            sq += vs[0].angle * vs[0].angle;
        }
        let std = (sq / n_walks as f64).sqrt();
        let expect = (n_slots as f64).sqrt() * sigma;
        assert!(
            (std - expect).abs() / expect < 0.10,
            "walk std {std} vs {expect}"
        );
    }

    #[test]
    fn angle_reflects_at_field_of_view() {
        let mut vs = vec![VehicleTruth {
            angle: 1.0,
            distance: 50.0,
            radial_velocity: 0.0,
            angular_velocity: 0.1,
            radar_bias: 0.0,
        }];
        let params = MobilityParams {
            angle_noise_std: 0.0,
            distance_noise_std: 0.0,
            bias_walk_std: 0.0,
            field_of_view: 1.05,
            ..MobilityParams::default()
        };
        advance_vehicles(&mut vs, &params, &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
        assert_eq!(vs[0].angle, 1.05);
        assert_eq!(vs[0].angular_velocity, -0.1);
    }

    #[test]
    fn radar_exact_when_noiseless() {
        let v = vehicle(0.3, 45.0);
        let noise = RadarNoise { angle_std: 0.0, distance_std: 0.0 };
        let obs = radar_observe(&v, &noise, &mut ChaCha12Rng::seed_from_u64(0));
        assert_eq!(obs.angle_estimate, 0.3);
        assert_eq!(obs.distance_estimate, 45.0);
    }

    #[test]
    fn radar_bias_shifts_estimate_exactly() {
        let mut v = vehicle(0.3, 45.0);
        v.radar_bias = 0.05;
        let noise = RadarNoise { angle_std: 0.0, distance_std: 0.0 };
        let obs = radar_observe(&v, &noise, &mut ChaCha12Rng::seed_from_u64(0));
        assert!((obs.angle_estimate - 0.35).abs() < 1e-15);
    }

    #[test]
    fn radar_noise_moment_check() {
        let v = vehicle(0.0, 45.0);
        let noise = RadarNoise { angle_std: 0.01, distance_std: 0.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let draws = 10_000;
        let mut sq = 0.0;
        for _ in 0..draws {
            let obs = radar_observe(&v, &noise, &mut rng);
            sq += obs.angle_estimate * obs.angle_estimate;
        }
        let std = (sq / draws as f64).sqrt();
        assert!((std - 0.01).abs() / 0.01 < 0.05, "sample std {std}");
    }

    proptest! {
        #[test]
        fn steering_entries_unit_modulus(angle in -1.5f64..1.5) {
            let sv = steering_vector(angle, &cfg(64)).unwrap();
            for e in sv {
                prop_assert!((e.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn beam_gain_invariant_to_global_phase(angle in -1.4f64..1.4, phase in -3.1f64..3.1) {
            let h = steering_vector(angle, &cfg(8)).unwrap();
            let v: Vec<Complex<f64>> =
                h.iter().rev().map(|e| e / (8.0f64).sqrt()).collect();
            let rot = Complex::from_polar(1.0, phase);
            let v_rot: Vec<Complex<f64>> = v.iter().map(|e| e * rot).collect();
            let g0 = beam_gain(&h, &v).unwrap();
            let g1 = beam_gain(&h, &v_rot).unwrap();
            prop_assert!((g0 - g1).abs() <= 1e-9 * (1.0 + g0));
        }

        #[test]
        fn sinr_increases_with_power_single_user(scale in 0.1f64..5.0, ds in 0.01f64..1.0) {
            let h = vec![steering_vector(0.2, &cfg(4)).unwrap()];
            let v = vec![h[0].iter().map(|e| e / 2.0).collect::<Vec<_>>()];
            let lo = sinr(&h, &v, 0, 1e-9, scale).unwrap();
            let hi = sinr(&h, &v, 0, 1e-9, scale + ds).unwrap();
            prop_assert!(hi > lo);
        }
    }
}
