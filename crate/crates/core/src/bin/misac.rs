//! Command-line entry point: train, evaluate, sweep, plot, or self-test the
//! simulator and its policies.

use clap::{Args, Parser, Subcommand};
use misac::env::{modulus_deviation, power_residual, Env, EpisodeConfig, JointAction};
use misac::harness::{
    emit_plots, load_config, run_experiment, snr_sweep, ExperimentConfig, RunMode,
};
use misac::{Real, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "misac",
    about = "Energy-aware multimodal sensing and beamforming simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// TOML experiment configuration (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy name: vision-only, radar-only, ppo, homo-moe, hmoe-no-aoi, hmoe.
    #[arg(long)]
    policy: Option<String>,
    /// Comma-separated seed list, e.g. `--seeds 0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Training episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated SNR grid in dB, ascending, e.g. `--snr-grid 0,10,20`.
    #[arg(long, value_delimiter = ',')]
    snr_grid: Option<Vec<Real>>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the selected policy over the seed list, then evaluate and
    /// persist traces, checkpoints, and the summary.
    Train(CommonArgs),
    /// Evaluate previously trained checkpoints from the output directory.
    Eval(CommonArgs),
    /// Retrain and evaluate at every SNR grid point.
    Sweep(CommonArgs),
    /// Render SVG charts (and their CSV twins) from persisted outputs.
    Plot(CommonArgs),
    /// Fast internal consistency checks; nonzero exit on any failure.
    Selftest,
}

fn build_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(policy) = &args.policy {
        cfg.policy = policy.clone();
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(episodes) = args.episodes {
        cfg.train_episodes = episodes;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(grid) = &args.snr_grid {
        cfg.snr_grid = grid.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = build_config(&args)?;
            let outcome = run_experiment(&cfg, RunMode::TrainAndEval)?;
            println!(
                "{}: E_total {:.3} +/- {:.3} J, MAE {:.4} deg, activation {:.3}",
                cfg.policy,
                outcome.summary.mean_e_total,
                outcome.summary.std_e_total,
                outcome.summary.mean_mae_deg,
                outcome.summary.mean_activation_rate
            );
            if cfg.emit_plots {
                emit_plots(&cfg.out)?;
            }
            println!("summary: {}", outcome.summary_path.display());
        }
        Command::Eval(args) => {
            let cfg = build_config(&args)?;
            let outcome = run_experiment(&cfg, RunMode::EvalOnly)?;
            println!(
                "{}: E_total {:.3} +/- {:.3} J, MAE {:.4} deg",
                cfg.policy,
                outcome.summary.mean_e_total,
                outcome.summary.std_e_total,
                outcome.summary.mean_mae_deg
            );
        }
        Command::Sweep(args) => {
            let cfg = build_config(&args)?;
            let points = snr_sweep(&cfg, RunMode::TrainAndEval)?;
            for p in &points {
                println!(
                    "{} @ {:>5.1} dB: E_total {:.3} J, MAE {:.4} deg",
                    cfg.policy, p.snr_db, p.summary.mean_e_total, p.summary.mean_mae_deg
                );
            }
            if cfg.emit_plots {
                emit_plots(&cfg.out)?;
            }
        }
        Command::Plot(args) => {
            let cfg = build_config(&args)?;
            let files = emit_plots(&cfg.out)?;
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Selftest => selftest()?,
    }
    Ok(())
}

/// Quick invariants every healthy build must satisfy: beam feasibility,
/// environment determinism, and finite metrics on a random policy.
fn selftest() -> Result<()> {
    let cfg = EpisodeConfig::default_setup();
    let mut rng = ChaCha12Rng::seed_from_u64(42);

    // Constant-modulus and power feasibility on random phases.
    let mut env = Env::new(cfg.clone(), 42)?;
    let phases: Vec<Vec<Real>> = (0..cfg.user_count)
        .map(|_| {
            (0..cfg.array.element_count)
                .map(|_| rng.gen_range(-3.2..3.2))
                .collect()
        })
        .collect();
    let action = JointAction::new(vec![true, false, true, false], phases)?;
    let outcome = env.step(&action)?;
    let dev = modulus_deviation(&outcome.beams);
    let residual = power_residual(&outcome.beams, cfg.power_scale(), cfg.p_max_watts());
    check("constant modulus within 1e-9", dev < 1e-9)?;
    check("power budget within 1e-9", residual < 1e-9)?;
    check("finite reward", outcome.reward.is_finite())?;

    // Determinism: identical seeds and actions give identical outcomes.
    let run_once = || -> Result<Vec<Real>> {
        let mut env = Env::new(cfg.clone(), 7)?;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut out = Vec::new();
        for _ in 0..20 {
            let schedule: Vec<bool> = (0..cfg.user_count).map(|_| rng.gen_bool(0.5)).collect();
            let phases =
                vec![vec![0.0; cfg.array.element_count]; cfg.user_count];
            let o = env.step(&JointAction::new(schedule, phases)?)?;
            out.push(o.reward);
            out.push(o.sensing_error);
        }
        Ok(out)
    };
    check("environment determinism", run_once()? == run_once()?)?;

    // Energy accounting: an all-on schedule costs exactly K * e_vis.
    let mut env = Env::new(cfg.clone(), 3)?;
    let all_on = JointAction::new(
        vec![true; cfg.user_count],
        vec![vec![0.0; cfg.array.element_count]; cfg.user_count],
    )?;
    let o = env.step(&all_on)?;
    check(
        "computational energy ceiling",
        o.energy.computational == cfg.e_vis * cfg.user_count as Real,
    )?;

    println!("selftest: all checks passed");
    Ok(())
}

fn check(name: &str, ok: bool) -> Result<()> {
    if ok {
        println!("selftest: {name} ... ok");
        Ok(())
    } else {
        Err(misac::Error::Domain(format!("selftest failed: {name}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
