use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use aaggff::bench::{run_regret, unify_check, OnlineLearner, ResponsePattern};
use aaggff::experiment::run_experiment;
use aaggff::{ExperimentConfig, ResponseBounds};

#[derive(Parser)]
#[command(name = "aaggff", version, about = "Fairness-aware adaptive aggregation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a federated experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `seeds`, e.g. `--seeds 0,1,2`.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads (0 = all cores). Never changes results.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Measure regret of both online rules on synthetic response sequences.
    RegretBench {
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "100,500,2000")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check that one exponentiated-gradient step reproduces every baseline.
    UnifyCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> aaggff::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            output,
            seeds,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = output {
                cfg.output_dir = dir;
            }
            if let Some(s) = seeds {
                if s.is_empty() {
                    return Err(aaggff::Error::Config("--seeds needs at least one seed".into()));
                }
                cfg.seeds = s;
            }
            let outcomes = run_experiment(&cfg, threads)?;
            for o in &outcomes {
                let s = o.summary;
                println!(
                    "seed {}: avg {:.4} worst10 {:.4} best10 {:.4} gini {:.3}",
                    o.seed, s.average, s.worst10, s.best10, s.gini_x100
                );
            }
            println!("results written to {}", cfg.output_dir.display());
            Ok(true)
        }
        Command::RegretBench { k, horizons, seed } => {
            let bounds = ResponseBounds::cross_silo(k)?;
            let mut ok = true;
            println!("learner,pattern,T,regret,bound,within");
            for learner in [OnlineLearner::Ons, OnlineLearner::Ftrl] {
                for pattern in ResponsePattern::ALL {
                    for &t in &horizons {
                        let r = run_regret(learner, pattern, k, t, bounds, seed)?;
                        let within = r.regret <= r.bound;
                        ok &= within;
                        println!("{},{pattern:?},{t},{:.6},{:.6},{within}", learner.name(), r.regret, r.bound);
                    }
                }
            }
            Ok(ok)
        }
        Command::UnifyCheck { instances, seed } => {
            let mut ok = true;
            println!("method,instances,max_err,pass");
            for rep in unify_check(instances, seed)? {
                let pass = rep.max_err <= 1e-9;
                ok &= pass;
                println!("{},{},{:e},{pass}", rep.method, rep.instances, rep.max_err);
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
