//! The per-slot decision process: state assembly, action application, reward
//! computation, and constraint accounting. This is the only place physics
//! and dynamics meet.
//!
//! Slot ordering: beams are built from the action's phases, misalignment
//! probabilities and energy come from the *pre-update* ages, the reward is
//! formed, the channel (true and estimated) is drawn, and only then do the
//! vehicles move, the ages update, and the radar refresh. A calibration
//! scheduled this slot therefore takes effect from the next slot on.

use crate::dynamics::{self, AoIVector, EnergyBreakdown, ReliabilityParams};
use crate::error::{Error, Result};
use crate::physics::{
    advance_vehicles, apply_channel_error, dbm_to_watts, radar_observe, sample_channel,
    ArrayConfig, ChannelRealization, MobilityParams, RadarNoise, VehicleTruth,
};
use crate::{Cplx, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

/// Per-user observation triple: radar angle, radar distance, age.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// K rows of (angle_estimate, distance_estimate, age).
    pub rows: Vec<[Real; 3]>,
}

impl SystemState {
    pub fn user_count(&self) -> usize {
        self.rows.len()
    }

    pub fn ages(&self) -> Vec<Real> {
        self.rows.iter().map(|r| r[2]).collect()
    }
}

/// Constant-modulus beamforming matrix: K beams of M entries, each of
/// modulus exactly 1/sqrt(M).
#[derive(Debug, Clone)]
pub struct BeamformingMatrix {
    pub beams: Vec<Vec<Cplx>>,
}

/// Wrap an angle to [-pi, pi).
pub fn wrap_phase(phi: Real) -> Real {
    let mut p = (phi + PI).rem_euclid(2.0 * PI);
    if p < 0.0 {
        p += 2.0 * PI;
    }
    p - PI
}

/// Exponential map from a K x M phase matrix onto the constant-modulus
/// manifold: `v_{k,m} = exp(j phi_{k,m}) / sqrt(M)`.
pub fn phases_to_beams(phases: &[Vec<Real>]) -> BeamformingMatrix {
    let beams = phases
        .iter()
        .map(|row| {
            let inv_sqrt_m = 1.0 / (row.len() as Real).sqrt();
            row.iter()
                .map(|&p| Cplx::from_polar(inv_sqrt_m, p))
                .collect()
        })
        .collect();
    BeamformingMatrix { beams }
}

/// Joint scheduling + beamforming action. Schedule binariness is enforced by
/// the type; phases are wrapped to [-pi, pi) on construction.
#[derive(Debug, Clone)]
pub struct JointAction {
    pub schedule: Vec<bool>,
    pub phases: Vec<Vec<Real>>,
}

impl JointAction {
    pub fn new(schedule: Vec<bool>, phases: Vec<Vec<Real>>) -> Result<Self> {
        if schedule.len() != phases.len() {
            return Err(Error::Shape(format!(
                "schedule has {} users, phase matrix {}",
                schedule.len(),
                phases.len()
            )));
        }
        let phases = phases
            .into_iter()
            .map(|row| row.into_iter().map(wrap_phase).collect())
            .collect();
        Ok(Self { schedule, phases })
    }

    /// Boundary constructor for numeric schedules (CSV, CLI): anything other
    /// than 0/1 is a domain error.
    pub fn from_binary(schedule: &[u8], phases: Vec<Vec<Real>>) -> Result<Self> {
        let sched: Result<Vec<bool>> = schedule
            .iter()
            .map(|&s| match s {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Domain(format!("non-binary schedule entry {other}"))),
            })
            .collect();
        Self::new(sched?, phases)
    }
}

/// Booleans for the per-slot reliability constraints.
#[derive(Debug, Clone)]
pub struct ConstraintViolations {
    /// Power budget exceeded beyond tolerance.
    pub power: bool,
    /// Per-user age-cap breach.
    pub aoi: Vec<bool>,
    /// Average misalignment probability above threshold.
    pub bmp: bool,
}

impl ConstraintViolations {
    pub fn any(&self) -> bool {
        self.power || self.bmp || self.aoi.iter().any(|&b| b)
    }
}

/// Everything one environment step produces.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: Real,
    pub next_state: SystemState,
    pub true_channel: ChannelRealization<Real>,
    pub beams: BeamformingMatrix,
    pub energy: EnergyBreakdown<Real>,
    pub avg_bmp: Real,
    pub constraint_violations: ConstraintViolations,
    /// Mean absolute angle error of the state the action was taken in.
    pub sensing_error: Real,
}

/// Uniform ranges vehicles are initialized from at reset.
#[derive(Debug, Clone)]
pub struct InitRanges {
    pub angle: Real,
    pub distance_min: Real,
    pub distance_max: Real,
    pub angular_velocity: Real,
    pub radial_velocity: Real,
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            angle: 0.8 * PI / 3.0,
            distance_min: 20.0,
            distance_max: 80.0,
            angular_velocity: 0.005,
            radial_velocity: 0.5,
        }
    }
}

/// Full static description of one episode.
#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub horizon: usize,
    pub user_count: usize,
    pub array: ArrayConfig<Real>,
    pub reliability: ReliabilityParams<Real>,
    /// Visual pipeline delay T_proc, slots.
    pub processing_delay: Real,
    /// Per-frame visual processing energy, Joules.
    pub e_vis: Real,
    /// Beam-recovery sweep energy per user, Joules.
    pub e_recovery: Real,
    /// Reward penalty weight on BMP threshold violation.
    pub lambda_misa: Real,
    pub p_max_dbm: Real,
    pub noise_dbm: Real,
    pub path_count: usize,
    /// Maximum channel error variance bound.
    pub rho: Real,
    pub mobility: MobilityParams<Real>,
    pub radar_noise: RadarNoise<Real>,
    pub init: InitRanges,
}

impl EpisodeConfig {
    /// Defaults mirroring the evaluation setup: 64-element ULA at 28 GHz,
    /// K = 4 vehicles, 30 dBm budget, -114 dBm noise, 200-slot episodes.
    pub fn default_setup() -> Self {
        Self {
            horizon: 200,
            user_count: 4,
            array: ArrayConfig::default_ula(),
            reliability: ReliabilityParams {
                uncertainty_rates: vec![0.05; 4],
                bmp_threshold: 0.3,
                aoi_cap: 20.0,
            },
            processing_delay: 1.0,
            e_vis: 10.0,
            e_recovery: 25.0,
            lambda_misa: 50.0,
            p_max_dbm: 30.0,
            noise_dbm: -114.0,
            path_count: 3,
            rho: 0.5,
            mobility: MobilityParams::default(),
            radar_noise: RadarNoise::default(),
            init: InitRanges::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.user_count < 1 {
            return Err(Error::Config("user_count must be >= 1".into()));
        }
        if self.reliability.uncertainty_rates.len() != self.user_count {
            return Err(Error::Config(
                "one uncertainty rate per user required".into(),
            ));
        }
        self.reliability.validate(self.processing_delay)?;
        if self.e_vis < 0.0 || self.e_recovery < 0.0 {
            return Err(Error::Config("energies must be nonnegative".into()));
        }
        if self.lambda_misa < 0.0 {
            return Err(Error::Config("lambda_misa must be nonnegative".into()));
        }
        if self.rho < 0.0 {
            return Err(Error::Config("rho must be nonnegative".into()));
        }
        if self.path_count < 1 {
            return Err(Error::Config("path_count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn p_max_watts(&self) -> Real {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn noise_watts(&self) -> Real {
        dbm_to_watts(self.noise_dbm)
    }

    /// Uniform signal-level amplitude scale sqrt(P_max / K): with unit-norm
    /// constant-modulus beams the power budget then holds with equality.
    pub fn power_scale(&self) -> Real {
        (self.p_max_watts() / self.user_count as Real).sqrt()
    }
}

/// One environment instance: single-threaded per episode, deterministic
/// under (config, seed, action sequence).
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EpisodeConfig,
    vehicles: Vec<VehicleTruth<Real>>,
    ages: AoIVector<Real>,
    state: SystemState,
    slot: usize,
    rng: ChaCha12Rng,
}

impl Env {
    pub fn new(cfg: EpisodeConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut env = Self {
            cfg,
            vehicles: Vec::new(),
            ages: AoIVector::fresh(0, 1.0),
            state: SystemState { rows: Vec::new() },
            slot: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn vehicles(&self) -> &[VehicleTruth<Real>] {
        &self.vehicles
    }

    #[cfg(test)]
    pub(crate) fn vehicles_mut(&mut self) -> &mut Vec<VehicleTruth<Real>> {
        &mut self.vehicles
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Fresh episode: random vehicles inside the field of view, all ages at
    /// the processing delay (calibration assumed at episode start).
    pub fn reset(&mut self, seed: u64) -> SystemState {
        self.rng = ChaCha12Rng::seed_from_u64(seed);
        self.slot = 0;
        let init = &self.cfg.init;
        self.vehicles = (0..self.cfg.user_count)
            .map(|_| VehicleTruth {
                angle: self.rng.gen_range(-init.angle..init.angle),
                distance: self.rng.gen_range(init.distance_min..init.distance_max),
                radial_velocity: self
                    .rng
                    .gen_range(-init.radial_velocity..init.radial_velocity),
                angular_velocity: self
                    .rng
                    .gen_range(-init.angular_velocity..init.angular_velocity),
                radar_bias: 0.0,
            })
            .collect();
        self.ages = AoIVector::fresh(self.cfg.user_count, self.cfg.processing_delay);
        self.state = self.observe();
        self.state.clone()
    }

    fn observe(&mut self) -> SystemState {
        let rows = self
            .vehicles
            .iter()
            .zip(&self.ages.ages)
            .map(|(v, &age)| {
                let obs = radar_observe(v, &self.cfg.radar_noise, &mut self.rng);
                [obs.angle_estimate, obs.distance_estimate, age]
            })
            .collect();
        SystemState { rows }
    }

    /// Advance one slot. See the module docs for the effect ordering.
    pub fn step(&mut self, action: &JointAction) -> Result<StepOutcome> {
        let k = self.cfg.user_count;
        if action.schedule.len() != k || action.phases.len() != k {
            return Err(Error::Shape("action user count mismatch".into()));
        }
        for row in &action.phases {
            if row.len() != self.cfg.array.element_count {
                return Err(Error::Shape("phase row length != element count".into()));
            }
        }

        // (1) constant-modulus beams.
        let beams = phases_to_beams(&action.phases);

        // (2) misalignment probabilities and energy from pre-update ages.
        let probs = dynamics::misalignment_probs(&self.ages, &self.cfg.reliability)?;
        let e_comp = dynamics::comp_energy(&action.schedule, self.cfg.e_vis);
        let e_sweep = dynamics::sweep_energy(&probs, self.cfg.e_recovery);
        let energy = dynamics::total_energy(e_comp, e_sweep);
        let avg_bmp = dynamics::average_bmp(&probs);

        // (3) reward.
        let reward = -energy.total
            - self.cfg.lambda_misa * (avg_bmp - self.cfg.reliability.bmp_threshold).max(0.0);

        // (4) channel realization.
        let true_rows = sample_channel(
            &self.vehicles,
            &self.cfg.array,
            self.cfg.path_count,
            &mut self.rng,
        )?;
        let channel = apply_channel_error(&true_rows, &probs, self.cfg.rho, &mut self.rng)?;

        // Sensing error of the state the action was chosen in.
        let (_, mae) = sensing_error(&self.state, &self.vehicles);

        // (5) advance world, apply AoI update, calibrate, re-observe.
        advance_vehicles(&mut self.vehicles, &self.cfg.mobility, &mut self.rng)?;
        self.ages = dynamics::update_aoi(&self.ages, &action.schedule)?;
        for (v, &scheduled) in self.vehicles.iter_mut().zip(&action.schedule) {
            if scheduled {
                v.radar_bias = 0.0;
            }
        }
        let next_state = self.observe();
        self.state = next_state.clone();
        self.slot += 1;

        // Post-update constraint accounting (9c-9e).
        let power_residual = power_residual(&beams, self.cfg.power_scale(), self.cfg.p_max_watts());
        let violations = ConstraintViolations {
            power: power_residual > 1e-9,
            aoi: self
                .ages
                .ages
                .iter()
                .map(|&a| a > self.cfg.reliability.aoi_cap)
                .collect(),
            bmp: avg_bmp > self.cfg.reliability.bmp_threshold,
        };

        if !reward.is_finite() {
            return Err(Error::NonFinite("reward".into()));
        }
        Ok(StepOutcome {
            reward,
            next_state,
            true_channel: channel,
            beams,
            energy,
            avg_bmp,
            constraint_violations: violations,
            sensing_error: mae,
        })
    }
}

/// Absolute residual of the aggregate power budget under the uniform scale.
pub fn power_residual(beams: &BeamformingMatrix, scale: Real, p_max_watts: Real) -> Real {
    let total: Real = beams
        .beams
        .iter()
        .map(|b| b.iter().map(|e| e.norm_sqr()).sum::<Real>() * scale * scale)
        .sum();
    (total - p_max_watts).abs()
}

/// Worst deviation of any beam entry modulus from 1/sqrt(M).
pub fn modulus_deviation(beams: &BeamformingMatrix) -> Real {
    beams
        .beams
        .iter()
        .flat_map(|b| {
            let inv_sqrt_m = 1.0 / (b.len() as Real).sqrt();
            b.iter().map(move |e| (e.norm() - inv_sqrt_m).abs())
        })
        .fold(0.0, Real::max)
}

/// Full constraint report for one step outcome.
#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub modulus_deviation: Real,
    pub modulus_ok: bool,
    pub power_residual: Real,
    pub power_ok: bool,
    pub aoi_breached: Vec<bool>,
    pub bmp_breached: bool,
    /// Schedule binariness holds by construction of [`JointAction`].
    pub binary_ok: bool,
}

pub fn check_constraints(outcome: &StepOutcome, cfg: &EpisodeConfig) -> ConstraintReport {
    let dev = modulus_deviation(&outcome.beams);
    let residual = power_residual(&outcome.beams, cfg.power_scale(), cfg.p_max_watts());
    ConstraintReport {
        modulus_deviation: dev,
        modulus_ok: dev < 1e-9,
        power_residual: residual,
        power_ok: residual < 1e-9,
        aoi_breached: outcome.constraint_violations.aoi.clone(),
        bmp_breached: outcome.constraint_violations.bmp,
        binary_ok: true,
    }
}

/// Per-user and mean absolute angle error between the observed state and the
/// ground truth. Angle only; this is the tracking-accuracy metric.
pub fn sensing_error(state: &SystemState, vehicles: &[VehicleTruth<Real>]) -> (Vec<Real>, Real) {
    let per_user: Vec<Real> = state
        .rows
        .iter()
        .zip(vehicles)
        .map(|(row, v)| (row[0] - v.angle).abs())
        .collect();
    let mean = per_user.iter().sum::<Real>() / per_user.len().max(1) as Real;
    (per_user, mean)
}

/// One row of the persisted per-slot trace.
#[derive(Debug, Clone)]
pub struct SlotRecord {
    pub slot: usize,
    pub ages: Vec<Real>,
    pub schedule: Vec<bool>,
    pub avg_bmp: Real,
    pub e_comp: Real,
    pub e_sweep: Real,
    pub reward: Real,
    pub mae: Real,
}

/// Trace CSV: `slot, age_1..K, pi_1..K, avg_bmp, e_comp, e_sweep, reward,
/// mae` — one row per slot, column order fixed.
pub fn write_trace_csv(path: &Path, records: &[SlotRecord]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if let Some(first) = records.first() {
        let k = first.ages.len();
        let mut header = vec!["slot".to_string()];
        header.extend((1..=k).map(|i| format!("age_{i}")));
        header.extend((1..=k).map(|i| format!("pi_{i}")));
        header.extend(
            ["avg_bmp", "e_comp", "e_sweep", "reward", "mae"]
                .iter()
                .map(|s| s.to_string()),
        );
        writeln!(file, "{}", header.join(","))?;
    }
    for r in records {
        let mut fields = vec![r.slot.to_string()];
        fields.extend(r.ages.iter().map(|a| format!("{a}")));
        fields.extend(r.schedule.iter().map(|&s| (s as u8).to_string()));
        fields.push(format!("{}", r.avg_bmp));
        fields.push(format!("{}", r.e_comp));
        fields.push(format!("{}", r.e_sweep));
        fields.push(format!("{}", r.reward));
        fields.push(format!("{}", r.mae));
        writeln!(file, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Inverse of [`write_trace_csv`]. Round-trips every value exactly (floats
/// are written in shortest-representation form).
pub fn read_trace_csv(path: &Path) -> Result<Vec<SlotRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = match lines.next() {
        Some(h) => h,
        None => return Ok(Vec::new()),
    };
    let k = header.split(',').filter(|c| c.starts_with("age_")).count();
    if k == 0 {
        return Err(Error::Serde(format!(
            "{}: header has no age columns",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 1 + 2 * k + 5 {
            return Err(Error::Serde(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line_no + 2,
                fields.len(),
                1 + 2 * k + 5
            )));
        }
        let num = |s: &str| -> Result<Real> {
            s.parse::<Real>()
                .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
        };
        let slot = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        let ages = fields[1..1 + k].iter().map(|s| num(s)).collect::<Result<_>>()?;
        let schedule = fields[1 + k..1 + 2 * k]
            .iter()
            .map(|&s| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Serde(format!(
                    "{}: non-binary schedule entry {other}",
                    path.display()
                ))),
            })
            .collect::<Result<_>>()?;
        records.push(SlotRecord {
            slot,
            ages,
            schedule,
            avg_bmp: num(fields[1 + 2 * k])?,
            e_comp: num(fields[2 + 2 * k])?,
            e_sweep: num(fields[3 + 2 * k])?,
            reward: num(fields[4 + 2 * k])?,
            mae: num(fields[5 + 2 * k])?,
        });
    }
    Ok(records)
}
