use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use famopt_core::circuits;
use famopt_core::optimizer::{self, Acquisition, RunConfig, Strategy};
use famopt_core::surrogate::external::{serve_mock, MockConfig};
use famopt_core::surrogate::BackendKind;
use famopt_harness::campaign::{run_campaign, write_atomic, CampaignConfig};
use famopt_harness::regression::{run_regression_protocol, write_csv_to, RegressionConfig};
use famopt_harness::{audit, bench, load_toml, report, HarnessError, Result};

#[derive(Parser)]
#[command(
    name = "famopt",
    version,
    about = "Discrete-posterior Bayesian optimization on analytic circuit testbenches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect and sample testbenches.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Small-sample regression protocol.
    Regress {
        #[command(subcommand)]
        command: RegressCommand,
    },
    /// Single optimization runs.
    Opt {
        #[command(subcommand)]
        command: OptCommand,
    },
    /// Run matrices of methods, testbenches and seeds.
    Campaign {
        #[command(subcommand)]
        command: CampaignCommand,
    },
    /// Regenerate the tables of a campaign directory from its traces.
    Report {
        #[arg(long)]
        from: PathBuf,
    },
    /// Check loop invariants on every trace of a campaign directory.
    Audit {
        #[arg(long)]
        from: PathBuf,
    },
    /// Protocol-complete fake surrogate server on stdin/stdout.
    #[command(hide = true)]
    MockBackend {
        #[arg(long, default_value_t = 1000)]
        max_context: usize,
        #[arg(long, default_value_t = 1.0)]
        prob_scale: f64,
        #[arg(long)]
        descending: bool,
        #[arg(long)]
        fail_after: Option<usize>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Registered testbenches with their dimensions and metrics.
    List,
    /// Write an LHS dataset of a testbench as CSV.
    Export {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the testbench manifest JSON.
    Manifest,
    /// External-evaluator protocol on stdin/stdout backed by a testbench.
    #[command(hide = true)]
    Eval {
        #[arg(long)]
        name: String,
    },
}

#[derive(Subcommand)]
enum RegressCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        backends: Option<Vec<BackendKind>>,
        #[arg(long)]
        external_backend_cmd: Option<String>,
    },
}

#[derive(Subcommand)]
enum OptCommand {
    Run(OptArgs),
}

#[derive(Args)]
struct OptArgs {
    #[arg(long)]
    bench: String,
    #[arg(long, default_value = "direct_fom")]
    strategy: Strategy,
    #[arg(long, default_value = "khist")]
    backend: BackendKind,
    #[arg(long, default_value = "dei")]
    acq: Acquisition,
    #[arg(long, default_value_t = optimizer::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = optimizer::DEFAULT_INIT_COUNT)]
    init: usize,
    #[arg(long, default_value_t = optimizer::DEFAULT_CANDIDATE_COUNT)]
    candidates: usize,
    #[arg(long, default_value_t = famopt_core::posterior::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = optimizer::DEFAULT_FOM_SAMPLES)]
    fom_samples: usize,
    /// Run the random-search baseline instead of the optimizer.
    #[arg(long)]
    random: bool,
    #[arg(long)]
    external_backend_cmd: Option<String>,
    #[arg(long)]
    external_eval_cmd: Option<String>,
    #[arg(long, default_value_t = optimizer::DEFAULT_EVAL_TIMEOUT_SECS)]
    eval_timeout: u64,
    /// Trace JSON destination (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CampaignCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        testbenches: Option<Vec<String>>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn write_output(out: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| HarnessError::io("<stdout>", e)),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench { command } => match command {
            BenchCommand::List => {
                println!("{:<20} {:>4}  metrics", "name", "dim");
                for (name, tb) in circuits::build_registry() {
                    println!("{name:<20} {:>4}  {}", tb.dim(), tb.metric_names().join(","));
                }
            }
            BenchCommand::Export {
                name,
                samples,
                seed,
                out,
            } => {
                let tb = circuits::build(&name)?;
                let mut buf = Vec::new();
                bench::export_csv(&tb, samples, seed, &mut buf)?;
                write_output(out.as_ref(), &buf)?;
            }
            BenchCommand::Manifest => print!("{}", circuits::manifest_json()),
            BenchCommand::Eval { name } => {
                let tb = circuits::build(&name)?;
                bench::serve_eval(&tb, io::stdin().lock(), io::stdout().lock())?;
            }
        },
        Command::Regress {
            command:
                RegressCommand::Run {
                    config,
                    out,
                    seeds,
                    sizes,
                    backends,
                    external_backend_cmd,
                },
        } => {
            let mut cfg: RegressionConfig = load_toml(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(s) = sizes {
                cfg.sizes = s;
            }
            if let Some(b) = backends {
                cfg.backends = b;
            }
            if external_backend_cmd.is_some() {
                cfg.external_backend_cmd = external_backend_cmd;
            }
            let rows = run_regression_protocol(&cfg)?;
            let mut buf = Vec::new();
            write_csv_to(&rows, &mut buf)?;
            write_output(out.as_ref(), &buf)?;
        }
        Command::Opt {
            command: OptCommand::Run(a),
        } => {
            let cfg = RunConfig {
                testbench: a.bench,
                strategy: a.strategy,
                backend: if a.external_backend_cmd.is_some() {
                    BackendKind::External
                } else {
                    a.backend
                },
                acquisition: a.acq,
                budget: a.budget,
                init_count: a.init,
                candidate_count: a.candidates,
                seed: a.seed,
                bins: a.bins,
                fom_samples: a.fom_samples,
                external_backend_cmd: a.external_backend_cmd,
                external_eval_cmd: a.external_eval_cmd,
                eval_timeout_secs: a.eval_timeout,
                ..Default::default()
            };
            let trace = if a.random {
                optimizer::random_search(&cfg)?
            } else {
                optimizer::run(&cfg)?
            };
            let mut json = serde_json::to_vec_pretty(&trace)?;
            json.push(b'\n');
            write_output(a.out.as_ref(), &json)?;
            log::info!("best fom {} at evaluation {}", trace.best_fom, trace.best_index + 1);
        }
        Command::Campaign {
            command:
                CampaignCommand::Run {
                    config,
                    out,
                    seeds,
                    testbenches,
                    budget,
                    candidates,
                    workers,
                },
        } => {
            let mut cfg: CampaignConfig = load_toml(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(t) = testbenches {
                cfg.testbenches = t;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if let Some(c) = candidates {
                cfg.candidate_count = c;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let report = run_campaign(cfg, &out)?;
            eprintln!(
                "{} runs, {} aggregate rows written to {}",
                report.runs.len(),
                report.aggregate.len(),
                out.display()
            );
        }
        Command::Report { from } => {
            let r = report::generate(&from)?;
            eprintln!("regenerated {} aggregate rows in {}", r.aggregate.len(), from.display());
        }
        Command::Audit { from } => {
            let (checked, violations) = audit::audit_dir(&from)?;
            for (file, v) in &violations {
                println!("{file}: {v}");
            }
            if !violations.is_empty() {
                return Err(HarnessError::Invalid(format!(
                    "{} violations across {checked} traces",
                    violations.len()
                )));
            }
            println!("{checked} traces, no violations");
        }
        Command::MockBackend {
            max_context,
            prob_scale,
            descending,
            fail_after,
        } => {
            let cfg = MockConfig {
                max_context,
                prob_scale,
                descending,
                fail_after,
            };
            serve_mock(io::stdin().lock(), BufWriter::new(io::stdout().lock()), &cfg)
                .map_err(|e| HarnessError::io("<stdio>", e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
