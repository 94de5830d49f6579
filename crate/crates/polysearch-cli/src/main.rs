//! `polysearch`: class-specific augmentation policy search from the shell.
//!
//! Exit codes: 0 success, 1 failed assertion in check commands, 2 config or
//! IO errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polysearch::dataset::synth::SynthConfig;
use polysearch::ga::GaConfig;
use polysearch::orchestrator::{
    cmd_analyze_policy, cmd_order_experiment, cmd_preview, cmd_rastrigin_check, cmd_search,
    cmd_synth_data, OrchestratorError, RunConfig,
};

#[derive(Parser)]
#[command(name = "polysearch", version, about = "Class-specific image-augmentation policy search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOverrides {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the GA master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the parallel worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full policy search and write policy, history, confusion
    /// matrices, and the report.
    Search {
        #[command(flatten)]
        overrides: CommonOverrides,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Run one search per category permutation and tabulate accuracies.
    OrderExperiment {
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Render per-class grids of the most and least likely transforms.
    Preview {
        #[command(flatten)]
        overrides: CommonOverrides,
        /// Policy file to visualize.
        #[arg(long)]
        policy: PathBuf,
        /// Samples per class.
        #[arg(short = 'n', long, default_value_t = 2)]
        samples: usize,
    },
    /// GA sanity check on the Rastrigin benchmark.
    RastriginCheck {
        #[arg(long, default_value_t = 5)]
        dims: usize,
        #[arg(long, default_value_t = 100)]
        population: usize,
        #[arg(long, default_value_t = 100)]
        generations: usize,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        /// Exit 1 unless the median best value halves.
        #[arg(long)]
        assert_halved: bool,
    },
    /// Per-class category means and transform ranking of a policy file.
    AnalyzePolicy {
        #[arg(long)]
        policy: PathBuf,
        /// Optional CSV output path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic confounded-class corpus as class folders.
    SynthData {
        /// Run config whose dataset section is synthetic; omit for the
        /// default 4-class corpus.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        side: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(overrides: &CommonOverrides) -> Result<RunConfig, OrchestratorError> {
    let mut config = RunConfig::load(&overrides.config)?;
    if let Some(seed) = overrides.seed {
        config.ga.master_seed = seed;
    }
    if overrides.workers.is_some() {
        config.workers = overrides.workers;
    }
    if let Some(out) = &overrides.output {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn run() -> Result<ExitCode, OrchestratorError> {
    match Cli::parse().command {
        Command::Search { overrides, resume } => {
            let config = load_config(&overrides)?;
            let artifacts = cmd_search(&config, resume)?;
            let s = &artifacts.summary;
            println!(
                "search finished after {} generations ({:?})",
                s.generations, s.termination
            );
            println!(
                "validation MPCA: zero policy {:.4} -> best policy {:.4}",
                s.baseline_fitness, s.best_fitness
            );
            println!(
                "test MPCA: baseline {:.4} -> optimized {:.4}",
                s.baseline_test_mpca, s.optimized_test_mpca
            );
            println!("artifacts in {}", artifacts.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::OrderExperiment { overrides } => {
            let config = load_config(&overrides)?;
            let experiment = cmd_order_experiment(&config)?;
            println!("order,mpca,overall_accuracy");
            for row in &experiment.rows {
                println!("{},{:.4},{:.4}", row.order, row.mpca, row.overall_accuracy);
            }
            println!("written to {}", experiment.csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Preview {
            overrides,
            policy,
            samples,
        } => {
            let config = load_config(&overrides)?;
            let seed = overrides.seed.unwrap_or(0);
            let files = cmd_preview(&policy, &config, samples, seed)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::RastriginCheck {
            dims,
            population,
            generations,
            seeds,
            seed,
            workers,
            assert_halved,
        } => {
            let ga = GaConfig {
                population_size: population,
                max_generations: generations,
                master_seed: seed,
                ..GaConfig::default()
            };
            let workers = workers
                .or_else(|| {
                    std::env::var(polysearch::orchestrator::WORKERS_ENV_VAR)
                        .ok()
                        .and_then(|v| v.parse().ok())
                })
                .unwrap_or(1);
            let check = cmd_rastrigin_check(dims, &ga, workers, seeds)?;
            print!("{}", check.to_text());
            if assert_halved && !check.halved() {
                eprintln!("FAIL: median best value did not halve");
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::AnalyzePolicy { policy, output } => {
            let analysis = cmd_analyze_policy(&policy, output.as_deref())?;
            print!("{}", analysis.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::SynthData {
            config,
            output,
            per_class,
            side,
            seed,
        } => {
            let synth = match config {
                Some(path) => match RunConfig::load(&path)?.dataset {
                    polysearch::orchestrator::DatasetSource::Synthetic(s) => s,
                    _ => {
                        return Err(OrchestratorError::Config(
                            "config dataset section is not synthetic".into(),
                        ))
                    }
                },
                None => SynthConfig::default_confounder(per_class, side, seed),
            };
            let written = cmd_synth_data(&synth, &output)?;
            println!("wrote {written} images under {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
