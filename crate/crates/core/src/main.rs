//! Command-line entry point: train, evaluate, sweep densities, run the
//! random baseline, check gradients, and replay recorded trajectories.

use clap::{Parser, Subcommand};
use intersim::config::{atomic_write, load_checkpoint, load_config, RunConfig};
use intersim::harness::{
    eval_reports_csv, evaluate, lookup_scenario, mix_seed, random_baseline, run_episode,
    scenario_table, sweep, trajectory_csv, EvalReport, Policy,
};
use intersim::neural::{finite_difference_check, Mlp, OutputActivation};
use intersim::replay_view::{parse_trajectory, playback};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "intersim", about = "T-intersection driving simulator with a TD3 learner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write curve CSV plus checkpoints.
    Train {
        /// JSON run configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Resume from this checkpoint instead of a fresh network.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint on one scenario.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// s1..s5, desk, or custom:PED,VEH.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Density-table scale applied when resolving s1..s5.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Also record one greedy episode to this trajectory CSV.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Evaluate a checkpoint across the whole density table.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scale factor on the density table, e.g. 0.04 for 1/25.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-scenario CSV here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uniform-random policy on one scenario, same protocol as eval.
    Baseline {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck,
    /// Re-simulate a recorded trajectory and print top-down frames.
    Replay {
        #[arg(long)]
        trajectory: PathBuf,
        /// Ticks between printed frames.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Half-width of the rendered window in metres.
        #[arg(long, default_value_t = 25.0)]
        extent: f64,
    },
}

fn print_report(label: &str, r: &EvalReport) {
    println!(
        "{label} scenario={} episodes={}x{} delay={:.2}s (±{:.2}) collisions={:.3} (±{:.3}) goal_rate={:.2}",
        r.scenario,
        r.episodes_per_repeat,
        r.repeats,
        r.mean_delay,
        r.ci95_delay,
        r.mean_collisions,
        r.ci95_collisions,
        r.goal_rate
    );
}

fn load_cfg(path: &Option<PathBuf>) -> Result<RunConfig, Box<dyn std::error::Error>> {
    Ok(match path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    })
}

fn run() -> Result<(), Box<dyn std::error::Error>> {
    match Cli::parse().command {
        Command::Train { config, seed, out, resume } => {
            let resume_ckpt = resume.as_deref().map(load_checkpoint).transpose()?;
            let cfg = match (&config, &resume_ckpt) {
                (Some(p), _) => load_config(p)?,
                (None, Some(c)) => c.config,
                (None, None) => RunConfig::default(),
            };
            let result = intersim::harness::train(&cfg, seed, &out, resume_ckpt)?;
            println!(
                "trained {} episodes; curve: {}; checkpoint: {}",
                result.returns.len(),
                result.curve_path.display(),
                result.checkpoint_path.display()
            );
            if let Some(w) = result.returns.rchunks(50).next() {
                let m: f64 = w.iter().sum::<f64>() / w.len() as f64;
                println!("final {}-episode mean return: {:.2}", w.len(), m);
            }
        }
        Command::Eval { checkpoint, scenario, episodes, repeats, seed, scale, record } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let spec = lookup_scenario(&scenario, scale)?;
            let policy = Policy::Greedy(&ckpt.agent.actor);
            let report = evaluate(&ckpt.config, &policy, &spec, episodes, repeats, seed)?;
            print_report("eval", &report);
            if let Some(path) = record {
                let cfg = RunConfig { ped: spec.ped, veh: spec.veh, ..ckpt.config };
                let (_, rec) = run_episode(&cfg, &policy, mix_seed(seed, 0), true)?;
                atomic_write(&path, trajectory_csv(&rec.unwrap()).as_bytes())?;
                println!("trajectory written to {}", path.display());
            }
        }
        Command::Sweep { checkpoint, scale, episodes, repeats, seed, out } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let table = scenario_table(scale);
            let policy = Policy::Greedy(&ckpt.agent.actor);
            let reports = sweep(&ckpt.config, &policy, &table, episodes, repeats, seed)?;
            for r in &reports {
                print_report("sweep", r);
            }
            let csv = eval_reports_csv(&reports);
            print!("{csv}");
            if let Some(path) = out {
                atomic_write(&path, csv.as_bytes())?;
            }
        }
        Command::Baseline { scenario, episodes, repeats, seed, scale, config } => {
            let cfg = load_cfg(&config)?;
            let spec = lookup_scenario(&scenario, scale)?;
            let report = random_baseline(&cfg, &spec, episodes, repeats, seed)?;
            print_report("baseline", &report);
        }
        Command::Gradcheck => {
            // At least five nets, up to the full actor shape (45 inputs,
            // two 256 hidden layers). The large net is costly to probe, so
            // it gets fewer seeds than the small ones.
            let suite: [(&[usize], u64); 3] = [
                (&[10, 16, 16, 3], 5),
                (&[46 + 2, 64, 64, 1], 5),
                (&[45, 256, 256, 3], 2),
            ];
            let mut worst = 0.0f64;
            for (shape, seeds) in suite {
                for seed in 0..seeds {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let net = Mlp::new(shape, OutputActivation::Tanh, &mut rng);
                    let input: Vec<f64> = (0..shape[0])
                        .map(|i| ((i as f64 + seed as f64) * 0.37).sin())
                        .collect();
                    let upstream: Vec<f64> = (0..*shape.last().unwrap())
                        .map(|i| 1.0 + i as f64 * 0.5)
                        .collect();
                    let err = finite_difference_check(&net, &input, &upstream, 1e-6, 1e-5);
                    worst = worst.max(err);
                    println!(
                        "gradcheck seed={seed} shape={shape:?} max_rel_err={err:.3e}"
                    );
                }
            }
            println!("gradcheck worst max_rel_err={worst:.3e}");
            if !(worst < 1e-4) {
                return Err(format!("gradient check failed: {worst:.3e} >= 1e-4").into());
            }
        }
        Command::Replay { trajectory, stride, extent } => {
            let text = std::fs::read_to_string(&trajectory)
                .map_err(|e| format!("cannot read {}: {e}", trajectory.display()))?;
            let traj = parse_trajectory(&text)?;
            for frame in playback(&traj, extent, stride)? {
                println!("{frame}");
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
