use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use comborl::harness::{
    cumulative_visit_times, evaluate, export_trajectories, log_spaced_horizons, parse_config_text, resume, sidecar_path,
    train, variance_experiment, BestKnownRegistry, Checkpoint, EvalPolicy, Learner, RunConfig, Session,
};
use comborl::ppo::stream_rng;

#[derive(Parser)]
#[command(name = "comborl", about = "Train and analyse agents on combinatorial navigation tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; flags override the config file.
    Train {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue the run saved in this checkpoint instead.
        #[arg(long, conflicts_with_all = ["task", "algo", "gamma", "frames", "seed", "config", "out"])]
        resume: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate checkpoints on fresh instances and normalize by best known returns.
    Eval {
        #[arg(long, value_delimiter = ',', required = true)]
        checkpoint: Vec<PathBuf>,
        #[arg(long)]
        instances: u64,
        #[arg(long, default_value_t = 1_000_000)]
        seed_base: u64,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Variance of truncated returns across rollouts from fixed initial states.
    Variance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        instances: u64,
        #[arg(long)]
        rollouts: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        horizons: usize,
        #[arg(long, default_value_t = 1_000_000)]
        seed_base: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write rollouts on one instance as CSV plus a JSON map description.
    ExportTraj {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        instance_seed: u64,
        #[arg(long)]
        rollouts: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mean steps needed to reach i distinct zones.
    VisitTimes {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        instances: u64,
        #[arg(long)]
        out: PathBuf,
        /// Steps added to the episode length when a count is never reached.
        #[arg(long, default_value_t = 0)]
        penalty: u32,
        #[arg(long, default_value_t = 1_000_000)]
        seed_base: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_learner(path: &Path) -> Result<(Checkpoint, Learner)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let learner = Learner::from_checkpoint(&ck)?;
    Ok((ck, learner))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[allow(clippy::too_many_arguments)]
fn run_train(
    task: Option<String>,
    algo: Option<String>,
    gamma: Option<f64>,
    frames: Option<u64>,
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    resume_from: Option<PathBuf>,
    quiet: bool,
) -> Result<()> {
    let report = |i: u64, m: &comborl::ppo::IterationMetrics| {
        if !quiet {
            eprintln!(
                "iter {i} frames {} return {:.3} success {:.3}",
                m.frames, m.mean_return, m.success_rate
            );
        }
    };
    if let Some(path) = resume_from {
        let s = resume(&path, report)?;
        eprintln!("finished at {} frames in {}", s.learner.frames(), s.config.out_dir);
        return Ok(());
    }
    let mut entries = match &config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    let flags = [
        ("task", task),
        ("algo", algo),
        ("gamma", gamma.map(|g| g.to_string())),
        ("frames", frames.map(|f| f.to_string())),
        ("seed", seed.map(|s| s.to_string())),
        ("out", out.map(|o| o.display().to_string())),
    ];
    entries.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
    let cfg = RunConfig::from_entries(&entries)?;
    let s = train(Session::new(cfg)?, false, report)?;
    eprintln!("finished at {} frames in {}", s.learner.frames(), s.config.out_dir);
    Ok(())
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            task,
            algo,
            gamma,
            frames,
            seed,
            config,
            out,
            resume,
            quiet,
        } => run_train(task, algo, gamma, frames, seed, config, out, resume, quiet),
        Command::Eval {
            checkpoint,
            instances,
            seed_base,
            registry,
            report,
            deterministic,
            seed,
        } => {
            ensure!(instances > 0, "--instances must be positive");
            let loaded = checkpoint.iter().map(|p| load_learner(p)).collect::<Result<Vec<_>>>()?;
            let task = loaded[0].0.run_config.task;
            let policies: Vec<EvalPolicy> = checkpoint
                .iter()
                .zip(&loaded)
                .map(|(p, (ck, l))| EvalPolicy {
                    checkpoint: p.display().to_string(),
                    algorithm: ck.run_config.algorithm.name().to_string(),
                    learner: l,
                })
                .collect();
            let seeds: Vec<u64> = (seed_base..seed_base + instances).collect();
            let mut reg = BestKnownRegistry::load(&registry)?;
            let r = evaluate(&policies, task, &seeds, &mut reg, seed, deterministic, now())?;
            reg.save(&registry)?;
            write_file(&report, &serde_json::to_string_pretty(&r)?)?;
            if !r.flagged_instances.is_empty() {
                eprintln!(
                    "warning: {} instances have a non-positive best known return and were not normalized",
                    r.flagged_instances.len()
                );
            }
            println!(
                "{} rows, mean normalized return {:.4} (90% CI {:.4} to {:.4})",
                r.rows.len(),
                r.mean_normalized,
                r.ci_low,
                r.ci_high
            );
            Ok(())
        }
        Command::Variance {
            checkpoint,
            instances,
            rollouts,
            gammas,
            out,
            horizons,
            seed_base,
            seed,
        } => {
            let (_, learner) = load_learner(&checkpoint)?;
            let seeds: Vec<u64> = (seed_base..seed_base + instances).collect();
            let grid = log_spaced_horizons(learner.arena().time_limit as usize, horizons);
            let r = variance_experiment(&learner, &seeds, rollouts, &gammas, &grid, seed)?;
            if r.degenerate {
                eprintln!("warning: every rollout was identical, variances are zero");
            }
            write_file(&out, &r.to_csv()?)?;
            Ok(())
        }
        Command::ExportTraj {
            checkpoint,
            instance_seed,
            rollouts,
            out,
            seed,
        } => {
            let (_, learner) = load_learner(&checkpoint)?;
            export_trajectories(&learner, instance_seed, rollouts, &out, seed)?;
            eprintln!("wrote {} and {}", out.display(), sidecar_path(&out).display());
            Ok(())
        }
        Command::VisitTimes {
            checkpoint,
            instances,
            out,
            penalty,
            seed_base,
            seed,
        } => {
            let (ck, learner) = load_learner(&checkpoint)?;
            if !ck.run_config.task.is_tsp() {
                bail!("visit times need a PointTSP or TimedTSP checkpoint");
            }
            let zones = ck.run_config.task.zone_count(learner.arena());
            let mut rng = stream_rng(seed, 0);
            let trajs = (seed_base..seed_base + instances)
                .map(|s| learner.play_episode(s, &mut rng, false).map(|t| (t.length(), t.visit_steps)))
                .collect::<comborl::Result<Vec<_>>>()?;
            let v = cumulative_visit_times(&trajs, zones, penalty);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["zones", "mean_steps", "mean_steps_complete", "incomplete", "trajectories"])?;
            for i in 0..zones {
                w.write_record([
                    (i + 1).to_string(),
                    v.mean[i].to_string(),
                    v.mean_complete[i].map_or(String::new(), |m| m.to_string()),
                    v.incomplete[i].to_string(),
                    v.trajectories.to_string(),
                ])?;
            }
            write_file(&out, &String::from_utf8(w.into_inner()?)?)?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
