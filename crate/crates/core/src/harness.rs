//! Experiment orchestration: configuration files, train/evaluate runs over
//! seed lists, the SNR sweep, metric aggregation, and static SVG plots.
//!
//! Output layout, rooted at the configured `out` directory:
//! `out/<policy>/<seed>/trace.csv` (plus `trace_<i>.csv` for extra eval
//! episodes, `training_log.csv`, `checkpoint.json`),
//! `out/<policy>/summary.json`, and `out/plots/*.svg` with matching CSVs.

use crate::agent::{EpisodeReport, HyperParams};
use crate::baselines::{make_policy, POLICY_NAMES};
use crate::env::{read_trace_csv, write_trace_csv, Env, EpisodeConfig, SlotRecord};
use crate::error::{Error, Result};
use crate::physics::ArrayConfig;
use crate::stats::mean_std;
use crate::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Reference SNR at which the default sensing-noise figures apply, dB.
pub const REFERENCE_SNR_DB: Real = 10.0;
/// Noise power that defines the reference SNR point, dBm.
pub const REFERENCE_NOISE_DBM: Real = -114.0;

fn default_policy() -> String {
    "hmoe".to_string()
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_train_episodes() -> usize {
    500
}
fn default_eval_episodes() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}
fn default_snr_grid() -> Vec<Real> {
    vec![0.0, 5.0, 10.0, 15.0, 20.0]
}

/// The `[episode]` section: physical and dynamic scene parameters. Defaults
/// reproduce the evaluation setup; every constant the source material leaves
/// open is documented in the committed default config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    /// Slots per episode. Chosen so an all-radar schedule saturates its
    /// misalignment probability well within one episode.
    pub horizon: usize,
    pub user_count: usize,
    pub element_count: usize,
    pub carrier_frequency_ghz: Real,
    pub element_spacing: Real,
    pub p_max_dbm: Real,
    pub noise_dbm: Real,
    /// Kinematic uncertainty rate beta (shared by all users).
    pub beta: Real,
    pub bmp_threshold: Real,
    pub aoi_cap: Real,
    pub processing_delay: Real,
    pub e_vis: Real,
    pub e_recovery: Real,
    pub lambda_misa: Real,
    pub rho: Real,
    pub path_count: usize,
    pub radar_angle_noise_std: Real,
    pub radar_distance_noise_std: Real,
    pub bias_walk_std: Real,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        let cfg = EpisodeConfig::default_setup();
        Self {
            horizon: cfg.horizon,
            user_count: cfg.user_count,
            element_count: cfg.array.element_count,
            carrier_frequency_ghz: cfg.array.carrier_frequency / 1e9,
            element_spacing: cfg.array.element_spacing,
            p_max_dbm: cfg.p_max_dbm,
            noise_dbm: cfg.noise_dbm,
            beta: cfg.reliability.uncertainty_rates[0],
            bmp_threshold: cfg.reliability.bmp_threshold,
            aoi_cap: cfg.reliability.aoi_cap,
            processing_delay: cfg.processing_delay,
            e_vis: cfg.e_vis,
            e_recovery: cfg.e_recovery,
            lambda_misa: cfg.lambda_misa,
            rho: cfg.rho,
            path_count: cfg.path_count,
            radar_angle_noise_std: cfg.radar_noise.angle_std,
            radar_distance_noise_std: cfg.radar_noise.distance_std,
            bias_walk_std: cfg.mobility.bias_walk_std,
        }
    }
}

impl EpisodeSection {
    pub fn to_episode_config(&self) -> Result<EpisodeConfig> {
        let mut cfg = EpisodeConfig::default_setup();
        cfg.horizon = self.horizon;
        cfg.user_count = self.user_count;
        cfg.array = ArrayConfig::new(
            self.element_count,
            self.carrier_frequency_ghz * 1e9,
            self.element_spacing,
        )?;
        cfg.p_max_dbm = self.p_max_dbm;
        cfg.noise_dbm = self.noise_dbm;
        cfg.reliability.uncertainty_rates = vec![self.beta; self.user_count];
        cfg.reliability.bmp_threshold = self.bmp_threshold;
        cfg.reliability.aoi_cap = self.aoi_cap;
        cfg.processing_delay = self.processing_delay;
        cfg.e_vis = self.e_vis;
        cfg.e_recovery = self.e_recovery;
        cfg.lambda_misa = self.lambda_misa;
        cfg.rho = self.rho;
        cfg.path_count = self.path_count;
        cfg.radar_noise.angle_std = self.radar_angle_noise_std;
        cfg.radar_noise.distance_std = self.radar_distance_noise_std;
        cfg.mobility.bias_walk_std = self.bias_walk_std;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The `[hyper]` section, mirroring [`HyperParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperSection {
    pub lambda_phys: Real,
    pub gamma: Real,
    pub lr_temporal: Real,
    pub lr_spatial: Real,
    pub lr_critic: Real,
    pub window: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub critic_hidden: usize,
    pub clamp_eps: Real,
    pub entropy_coef: Real,
    pub entropy_anneal_episodes: usize,
    pub reward_scale: Real,
}

impl Default for HyperSection {
    fn default() -> Self {
        let hp = HyperParams::default();
        Self {
            lambda_phys: hp.lambda_phys,
            gamma: hp.gamma,
            lr_temporal: hp.lr_temporal,
            lr_spatial: hp.lr_spatial,
            lr_critic: hp.lr_critic,
            window: hp.window,
            lstm_hidden: hp.lstm_hidden,
            mlp_hidden: hp.mlp_hidden,
            critic_hidden: hp.critic_hidden,
            clamp_eps: hp.clamp_eps,
            entropy_coef: hp.entropy_coef,
            entropy_anneal_episodes: hp.entropy_anneal_episodes,
            reward_scale: hp.reward_scale,
        }
    }
}

impl HyperSection {
    pub fn to_hyper_params(&self) -> HyperParams {
        HyperParams {
            lambda_phys: self.lambda_phys,
            gamma: self.gamma,
            lr_temporal: self.lr_temporal,
            lr_spatial: self.lr_spatial,
            lr_critic: self.lr_critic,
            window: self.window,
            lstm_hidden: self.lstm_hidden,
            mlp_hidden: self.mlp_hidden,
            critic_hidden: self.critic_hidden,
            clamp_eps: self.clamp_eps,
            entropy_coef: self.entropy_coef,
            entropy_anneal_episodes: self.entropy_anneal_episodes,
            reward_scale: self.reward_scale,
        }
    }
}

/// Full experiment description, loadable from TOML. Unknown keys are
/// rejected with the offending key named.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub out: PathBuf,
    pub emit_plots: bool,
    /// SNR grid for `sweep`, dB, ascending.
    pub snr_grid: Vec<Real>,
    pub episode: EpisodeSection,
    pub hyper: HyperSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            seeds: default_seeds(),
            train_episodes: default_train_episodes(),
            eval_episodes: default_eval_episodes(),
            out: default_out(),
            emit_plots: default_true(),
            snr_grid: default_snr_grid(),
            episode: EpisodeSection::default(),
            hyper: HyperSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: list must be non-empty".into()));
        }
        if !POLICY_NAMES.contains(&self.policy.as_str()) {
            return Err(Error::Config(format!(
                "policy: unknown '{}'; expected one of {POLICY_NAMES:?}",
                self.policy
            )));
        }
        if self.snr_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "snr_grid: must be strictly ascending".into(),
            ));
        }
        self.episode.to_episode_config()?;
        self.hyper.to_hyper_params().validate()?;
        Ok(())
    }
}

/// Parse and validate a TOML experiment configuration.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg: ExperimentConfig = toml::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Seed-aggregated evaluation metrics for one policy. Every field is
/// recomputable from the persisted per-slot traces.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricSummary {
    pub policy: String,
    pub seeds: Vec<u64>,
    pub mean_e_total: Real,
    pub std_e_total: Real,
    pub mean_e_comp: Real,
    pub std_e_comp: Real,
    pub mean_e_sweep: Real,
    pub std_e_sweep: Real,
    pub mean_avg_bmp: Real,
    pub std_avg_bmp: Real,
    /// Sensing mean absolute angle error, degrees (radians internally).
    pub mean_mae_deg: Real,
    pub std_mae_deg: Real,
    pub mean_activation_rate: Real,
    pub std_activation_rate: Real,
    /// Slots in which any user's age exceeded the cap / the average BMP
    /// exceeded its threshold, summed over all evaluated episodes.
    pub aoi_violation_slots: u64,
    pub bmp_violation_slots: u64,
    /// Per-seed time-averaged E_total (ordering tests pair on these).
    pub per_seed_e_total: Vec<Real>,
    pub per_seed_mae_deg: Vec<Real>,
}

const RAD_TO_DEG: Real = 180.0 / std::f64::consts::PI;

/// Per-seed slot traces -> seed-aggregated summary. `traces[i]` holds every
/// evaluated episode of seed `seeds[i]`, concatenated.
pub fn summarize(
    policy: &str,
    seeds: &[u64],
    traces: &[Vec<SlotRecord>],
    cfg: &EpisodeConfig,
) -> MetricSummary {
    let per_seed = |f: &dyn Fn(&SlotRecord) -> Real| -> Vec<Real> {
        traces
            .iter()
            .map(|t| t.iter().map(|r| f(r)).sum::<Real>() / t.len().max(1) as Real)
            .collect()
    };
    let e_total = per_seed(&|r| r.e_comp + r.e_sweep);
    let e_comp = per_seed(&|r| r.e_comp);
    let e_sweep = per_seed(&|r| r.e_sweep);
    let bmp = per_seed(&|r| r.avg_bmp);
    let mae_deg = per_seed(&|r| r.mae * RAD_TO_DEG);
    let act = per_seed(&|r| {
        r.schedule.iter().filter(|&&s| s).count() as Real / r.schedule.len().max(1) as Real
    });
    let aoi_violations = traces
        .iter()
        .flatten()
        .filter(|r| r.ages.iter().any(|&a| a > cfg.reliability.aoi_cap))
        .count() as u64;
    let bmp_violations = traces
        .iter()
        .flatten()
        .filter(|r| r.avg_bmp > cfg.reliability.bmp_threshold)
        .count() as u64;
    let (m_et, s_et) = mean_std(&e_total);
    let (m_ec, s_ec) = mean_std(&e_comp);
    let (m_es, s_es) = mean_std(&e_sweep);
    let (m_b, s_b) = mean_std(&bmp);
    let (m_m, s_m) = mean_std(&mae_deg);
    let (m_a, s_a) = mean_std(&act);
    MetricSummary {
        policy: policy.to_string(),
        seeds: seeds.to_vec(),
        mean_e_total: m_et,
        std_e_total: s_et,
        mean_e_comp: m_ec,
        std_e_comp: s_ec,
        mean_e_sweep: m_es,
        std_e_sweep: s_es,
        mean_avg_bmp: m_b,
        std_avg_bmp: s_b,
        mean_mae_deg: m_m,
        std_mae_deg: s_m,
        mean_activation_rate: m_a,
        std_activation_rate: s_a,
        aoi_violation_slots: aoi_violations,
        bmp_violation_slots: bmp_violations,
        per_seed_e_total: e_total,
        per_seed_mae_deg: mae_deg,
    }
}

impl MetricSummary {
    pub fn assert_finite(&self) -> Result<()> {
        for (name, v) in [
            ("mean_e_total", self.mean_e_total),
            ("mean_e_comp", self.mean_e_comp),
            ("mean_e_sweep", self.mean_e_sweep),
            ("mean_avg_bmp", self.mean_avg_bmp),
            ("mean_mae_deg", self.mean_mae_deg),
            ("mean_activation_rate", self.mean_activation_rate),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(())
    }
}

/// Deterministic seed derivations: every policy sees identical environment
/// and action-sampling streams for a given experiment seed.
pub fn train_env_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
}
pub fn eval_env_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(7_777_777)
        .wrapping_add(13 + episode as u64)
}
pub fn policy_init_seed(seed: u64, policy: &str) -> u64 {
    // Stable per-policy offset so architectures do not share init streams.
    let tag: u64 = policy.bytes().fold(0, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}
pub fn action_rng_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_5EED_5EED_5EED
}

/// Append-mode training log: one row per training episode.
pub fn write_training_log(path: &Path, reports: &[EpisodeReport]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        file,
        "episode,mean_reward,mean_e_total,mean_bmp,mae,activation_rate"
    )?;
    for (e, r) in reports.iter().enumerate() {
        writeln!(
            file,
            "{e},{},{},{},{},{}",
            r.mean_reward, r.mean_energy, r.mean_bmp, r.mean_mae, r.activation_rate
        )?;
    }
    Ok(())
}

/// Whether `run_experiment` trains fresh policies or reloads checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Train per seed, then evaluate and persist everything.
    TrainAndEval,
    /// Load each seed's checkpoint from the output directory and evaluate.
    EvalOnly,
}

/// Everything one experiment run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: MetricSummary,
    pub summary_path: PathBuf,
    /// Per-seed evaluation traces (concatenated episodes), matching what
    /// was persisted.
    pub traces: Vec<Vec<SlotRecord>>,
    /// Per-seed training reports (empty in eval-only mode).
    pub training: Vec<Vec<EpisodeReport>>,
}

/// Train (or reload) and evaluate one policy over the seed list, persisting
/// traces, checkpoints, training logs, and the summary JSON.
pub fn run_experiment(config: &ExperimentConfig, mode: RunMode) -> Result<RunOutcome> {
    config.validate()?;
    let cfg = config.episode.to_episode_config()?;
    let hp = config.hyper.to_hyper_params();
    let policy_dir = config.out.join(&config.policy);
    std::fs::create_dir_all(&policy_dir)?;

    let mut traces = Vec::with_capacity(config.seeds.len());
    let mut training = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let seed_dir = policy_dir.join(seed.to_string());
        std::fs::create_dir_all(&seed_dir)?;
        let mut init_rng = ChaCha12Rng::seed_from_u64(policy_init_seed(seed, &config.policy));
        let mut policy = make_policy(
            &config.policy,
            cfg.user_count,
            cfg.array.element_count,
            hp.clone(),
            &mut init_rng,
        )?;
        let mut env = Env::new(cfg.clone(), seed)?;
        let mut action_rng = ChaCha12Rng::seed_from_u64(action_rng_seed(seed));

        let ckpt_path = seed_dir.join("checkpoint.json");
        let mut reports = Vec::new();
        match mode {
            RunMode::TrainAndEval => {
                for episode in 0..config.train_episodes {
                    let report = policy.train_episode(
                        &mut env,
                        train_env_seed(seed, episode),
                        &mut action_rng,
                    )?;
                    reports.push(report);
                }
                if config.train_episodes > 0 {
                    write_training_log(&seed_dir.join("training_log.csv"), &reports)?;
                }
                policy.save_checkpoint(&ckpt_path)?;
            }
            RunMode::EvalOnly => {
                policy.load_checkpoint(&ckpt_path).map_err(|e| {
                    Error::Config(format!(
                        "no usable checkpoint at {}: {e}",
                        ckpt_path.display()
                    ))
                })?;
            }
        }

        let mut eval_rng = ChaCha12Rng::seed_from_u64(action_rng_seed(seed).wrapping_add(1));
        let mut seed_trace = Vec::new();
        for episode in 0..config.eval_episodes {
            let report =
                policy.eval_episode(&mut env, eval_env_seed(seed, episode), &mut eval_rng)?;
            let name = if episode == 0 {
                "trace.csv".to_string()
            } else {
                format!("trace_{episode}.csv")
            };
            write_trace_csv(&seed_dir.join(name), &report.records)?;
            seed_trace.extend(report.records);
        }
        traces.push(seed_trace);
        training.push(reports);
    }

    let summary = summarize(&config.policy, &config.seeds, &traces, &cfg);
    summary.assert_finite()?;
    let summary_path = policy_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutcome {
        summary,
        summary_path,
        traces,
        training,
    })
}

/// Recompute a policy's summary purely from its persisted traces.
pub fn recompute_summary(
    out: &Path,
    policy: &str,
    seeds: &[u64],
    eval_episodes: usize,
    cfg: &EpisodeConfig,
) -> Result<MetricSummary> {
    let mut traces = Vec::with_capacity(seeds.len());
    for seed in seeds {
        let seed_dir = out.join(policy).join(seed.to_string());
        let mut t = Vec::new();
        for episode in 0..eval_episodes {
            let name = if episode == 0 {
                "trace.csv".to_string()
            } else {
                format!("trace_{episode}.csv")
            };
            t.extend(read_trace_csv(&seed_dir.join(name))?);
        }
        traces.push(t);
    }
    Ok(summarize(policy, seeds, &traces, cfg))
}

/// Derive the episode configuration at one SNR grid point. Communication
/// noise power follows the SNR definition around the -114 dBm / 10 dB
/// reference; radar tracking grows more reliable with SNR, so the radar
/// angle noise, the bias random walk, and the kinematic uncertainty rate
/// all scale by 10^(-(SNR-10)/20) relative to their 10 dB defaults.
pub fn config_at_snr(base: &EpisodeSection, snr_db: Real) -> EpisodeSection {
    let mut section = base.clone();
    let scale = (10.0 as Real).powf(-(snr_db - REFERENCE_SNR_DB) / 20.0);
    section.noise_dbm = REFERENCE_NOISE_DBM + (REFERENCE_SNR_DB - snr_db);
    section.radar_angle_noise_std = base.radar_angle_noise_std * scale;
    section.bias_walk_std = base.bias_walk_std * scale;
    section.beta = base.beta * scale;
    section
}

/// One sweep point's results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: Real,
    pub summary: MetricSummary,
}

/// Retrain and evaluate the configured policy at every SNR grid point.
/// Points are independent experiments written under `out/sweep/snr_<dB>/`.
pub fn snr_sweep(config: &ExperimentConfig, mode: RunMode) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let mut points = Vec::with_capacity(config.snr_grid.len());
    for &snr in &config.snr_grid {
        let mut point_config = config.clone();
        point_config.episode = config_at_snr(&config.episode, snr);
        point_config.out = config.out.join("sweep").join(format!("snr_{snr}"));
        point_config.emit_plots = false;
        let outcome = run_experiment(&point_config, mode)?;
        points.push(SweepPoint {
            snr_db: snr,
            summary: outcome.summary,
        });
    }
    let table_path = config.out.join("sweep").join(format!("{}.json", config.policy));
    std::fs::write(&table_path, serde_json::to_string_pretty(&points)?)?;
    Ok(points)
}

/// One labeled polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(Real, Real)>,
}

const SERIES_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Minimal standalone SVG line chart (no external renderer needed).
pub fn write_line_chart(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    let (w, h) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 160.0, 40.0, 50.0);
    let all: Vec<(Real, Real)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Domain("no data points to plot".into()));
    }
    let (mut x0, mut x1) = all
        .iter()
        .fold((Real::INFINITY, Real::NEG_INFINITY), |(a, b), p| {
            (a.min(p.0), b.max(p.0))
        });
    let (mut y0, mut y1) = all
        .iter()
        .fold((Real::INFINITY, Real::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.05;
    y0 -= pad;
    y1 += pad;
    let sx = |x: Real| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: Real| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        (ml + w - mr) / 2.0
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    // Ticks.
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as Real / 5.0;
        let fy = y0 + (y1 - y0) * i as Real / 5.0;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n\
             <text x=\"{0}\" y=\"{3}\" text-anchor=\"middle\">{4:.1}</text>\n",
            sx(fx),
            h - mb,
            h - mb + 5.0,
            h - mb + 20.0,
            fx
        ));
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n\
             <text x=\"{3}\" y=\"{4}\" text-anchor=\"end\">{5:.2}</text>\n",
            ml - 5.0,
            sy(fy),
            ml,
            ml - 8.0,
            sy(fy) + 4.0,
            fy
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{y_label}</text>\n",
        (mt + h - mb) / 2.0
    ));
    // Series and legend.
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        let ly = mt + 18.0 * i as Real;
        svg.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{2}\" y=\"{3}\">{4}</text>\n",
            w - mr + 10.0,
            w - mr + 34.0,
            w - mr + 40.0,
            ly + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

/// The chart's underlying numbers, single source of truth shared with the
/// SVG: columns are `x` then one per series label.
pub fn write_series_csv(path: &Path, x_name: &str, series: &[Series]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = vec![x_name.to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    writeln!(file, "{}", header.join(","))?;
    let rows = series.iter().map(|s| s.points.len()).max().unwrap_or(0);
    for i in 0..rows {
        let x = series
            .iter()
            .find_map(|s| s.points.get(i).map(|p| p.0))
            .unwrap_or_default();
        let mut fields = vec![format!("{x}")];
        for s in series {
            fields.push(
                s.points
                    .get(i)
                    .map(|p| format!("{}", p.1))
                    .unwrap_or_default(),
            );
        }
        writeln!(file, "{}", fields.join(","))?;
    }
    Ok(())
}

fn mean_per_slot(traces: &[Vec<SlotRecord>], f: &dyn Fn(&SlotRecord) -> Real) -> Vec<(Real, Real)> {
    let horizon = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    (0..horizon)
        .map(|slot| {
            let vals: Vec<Real> = traces
                .iter()
                .filter_map(|t| t.get(slot))
                .map(|r| f(r))
                .collect();
            (
                slot as Real,
                vals.iter().sum::<Real>() / vals.len().max(1) as Real,
            )
        })
        .collect()
}

/// Render every chart the persisted outputs support: energy vs slot and MAE
/// vs slot for each policy directory found, plus energy vs SNR if sweep
/// tables exist. Returns the files written; an empty output tree produces a
/// warning and no files, without failing.
pub fn emit_plots(out: &Path) -> Result<Vec<PathBuf>> {
    let mut energy_series = Vec::new();
    let mut mae_series = Vec::new();
    for name in POLICY_NAMES {
        let policy_dir = out.join(name);
        if !policy_dir.is_dir() {
            continue;
        }
        let mut traces = Vec::new();
        let mut seed_dirs: Vec<PathBuf> = std::fs::read_dir(&policy_dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        seed_dirs.sort();
        for dir in seed_dirs {
            let trace = dir.join("trace.csv");
            if trace.is_file() {
                traces.push(read_trace_csv(&trace)?);
            }
        }
        if traces.is_empty() {
            continue;
        }
        energy_series.push(Series {
            label: name.to_string(),
            points: mean_per_slot(&traces, &|r| r.e_comp + r.e_sweep),
        });
        mae_series.push(Series {
            label: name.to_string(),
            points: mean_per_slot(&traces, &|r| r.mae * RAD_TO_DEG),
        });
    }

    let mut snr_series = Vec::new();
    let sweep_dir = out.join("sweep");
    if sweep_dir.is_dir() {
        for name in POLICY_NAMES {
            let table = sweep_dir.join(format!("{name}.json"));
            if !table.is_file() {
                continue;
            }
            let points: Vec<SweepPoint> =
                serde_json::from_str(&std::fs::read_to_string(&table)?)?;
            snr_series.push(Series {
                label: name.to_string(),
                points: points
                    .iter()
                    .map(|p| (p.snr_db, p.summary.mean_e_total))
                    .collect(),
            });
        }
    }

    if energy_series.is_empty() && snr_series.is_empty() {
        eprintln!("warning: nothing to plot under {}", out.display());
        return Ok(Vec::new());
    }

    let plots = out.join("plots");
    std::fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    if !energy_series.is_empty() {
        for (stem, title, ylab, series) in [
            (
                "energy_vs_slot",
                "Per-slot total energy",
                "E_total (J)",
                &energy_series,
            ),
            (
                "mae_vs_slot",
                "Per-slot sensing MAE",
                "MAE (deg)",
                &mae_series,
            ),
        ] {
            let svg = plots.join(format!("{stem}.svg"));
            let csv = plots.join(format!("{stem}.csv"));
            write_line_chart(&svg, title, "slot", ylab, series)?;
            write_series_csv(&csv, "slot", series)?;
            written.push(svg);
            written.push(csv);
        }
    }
    if !snr_series.is_empty() {
        let svg = plots.join("energy_vs_snr.svg");
        let csv = plots.join("energy_vs_snr.csv");
        write_line_chart(
            &svg,
            "Time-averaged energy vs SNR",
            "SNR (dB)",
            "E_total (J)",
            &snr_series,
        )?;
        write_series_csv(&csv, "snr_db", &snr_series)?;
        written.push(svg);
        written.push(csv);
    }
    Ok(written)
}
