use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beamscope::eval::{self, Experiment, ExperimentConfig, SweepOptions};
use beamscope::estimators::{count_multiplies, EstimatorKind};
use beamscope::rng::Seed;
use beamscope::{oracle, Error, Result};

const SEED_ENV: &str = "BEAMSCOPE_SEED";

/// Beamspace channel estimation: simulation, OMP / AMP / LAMP / GM-LAMP, training and NMSE sweeps.
#[derive(Debug, Parser)]
#[command(name = "beamscope", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config and BEAMSCOPE_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 selects the bit-exact reference path.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the sensing matrix and the training, validation and test sets.
    Generate,
    /// Train the learned estimators layer by layer; writes checkpoints and loss curves.
    Train {
        /// Only train the estimator with this label.
        #[arg(long)]
        estimator: Option<String>,
    },
    /// Run the NMSE sweep and write the results CSV.
    Evaluate {
        /// Results path (default: `<output.dir>/<output.results>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the shrinkage and gradient oracle suites.
    Oracle {
        /// Smaller case counts.
        #[arg(long)]
        quick: bool,
    },
    /// Print the complex-multiply counts per estimate.
    Count {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 24)]
        sparsity: usize,
        #[arg(long, default_value_t = 10)]
        amp_iterations: usize,
        #[arg(long, default_value_t = 8)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        nc: usize,
    },
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn load_experiment(cli: &Cli) -> Result<Experiment> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config <path>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed.or(env_seed()?) {
        cfg.seed = seed;
    }
    Experiment::new(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Generate => {
            let exp = load_experiment(cli)?;
            for path in eval::generate(&exp)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Train { estimator } => {
            let exp = load_experiment(cli)?;
            let models = eval::train_all(&exp, estimator.as_deref())?;
            if models.is_empty() {
                println!("no learned estimators in the config");
            }
            for m in models {
                println!(
                    "{} [{}]: {} layers, {} steps, final validation loss {:.6e} -> {}",
                    m.label,
                    m.band,
                    m.net.depth(),
                    m.report.total_steps,
                    m.report.sub_procedures.last().copied().unwrap_or(f64::NAN),
                    m.checkpoint.display()
                );
            }
        }
        Command::Evaluate { out } => {
            let exp = load_experiment(cli)?;
            let opts = SweepOptions {
                record_wall_time: cli.threads != Some(1),
            };
            let result = eval::run_sweep(&exp, opts)?;
            let path = out.clone().unwrap_or_else(|| exp.results_path());
            eval::export_csv(&result, &path)?;
            println!("{:<12} {:>8} {:>10} {:>12}", "estimator", "snr_db", "nmse_db", "multiplies");
            for r in &result.rows {
                println!("{:<12} {:>8} {:>10.3} {:>12}", r.estimator, r.snr_db, r.nmse_db, r.multiplies);
            }
            println!("wrote {}", path.display());
        }
        Command::Oracle { quick } => {
            let seed = Seed(cli.seed.or(env_seed()?).unwrap_or(0));
            let outcomes = oracle::run_all(seed, *quick);
            for o in &outcomes {
                println!("{o}");
            }
            return Ok(outcomes.iter().all(|o| o.passed));
        }
        Command::Count {
            n,
            m,
            sparsity,
            amp_iterations,
            layers,
            nc,
        } => {
            let rows = [
                (EstimatorKind::Omp, *sparsity, "S"),
                (EstimatorKind::Amp, *amp_iterations, "T"),
                (EstimatorKind::Lamp, *layers, "T"),
                (EstimatorKind::GmLamp { nc: *nc }, *layers, "T"),
            ];
            println!("N = {n}, M = {m}");
            for (kind, depth, sym) in rows {
                let count = count_multiplies(kind, *n, *m, depth);
                println!("{:<8} {sym}={depth:<3} {count:>12}  ({count:.2e})", kind.name());
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
