use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use econ_audit::auction::{optimal_reserve, ValuationDistribution};
use econ_audit::interventions::{sample_prompts, InterventionSpec, TemplateSet};
use econ_audit::newsvendor::{default_price_cost_schedule, optimal_quantity};
use econ_audit::transcript::Task;
use econ_audit_cli::error::{CliError, EXIT_CONFIG, EXIT_OK};
use econ_audit_cli::manifest::SessionStatus;
use econ_audit_cli::run::{resume_experiment, run_experiment, RunOptions, RunSummary};
use econ_audit_cli::{analyze, humans, ExperimentConfig, Result};

#[derive(Parser)]
#[command(
    name = "econ-audit",
    version,
    about = "Run and analyze repeated auction and newsvendor experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file without running anything.
    ValidateConfig { config: PathBuf },
    /// Start a new run.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Continue an interrupted or partially failed run.
    Resume {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Compute reports and plot data for a finished run.
    Analyze {
        config: PathBuf,
        /// Run directory (defaults to the config's output directory).
        #[arg(long)]
        run: Option<PathBuf>,
        /// Human trace directory (overrides the config).
        #[arg(long)]
        humans: Option<PathBuf>,
    },
    /// Write synthetic stand-in human traces.
    GenHumans {
        #[arg(long)]
        task: Task,
        #[arg(long, default_value_t = 40)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rounds: Option<u32>,
        #[arg(long, default_value_t = 0.5)]
        cube_root_fraction: f64,
    },
    /// Check prompt templates against their declared placeholders.
    LintTemplates {
        /// Directory of template overrides.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Also print the sample rendering of a condition, e.g. `auction:imitation-direct`.
        #[arg(long)]
        show: Option<String>,
    },
    /// Print optimal reserve and order-quantity tables.
    Oracle {
        /// `cube_root`, `cube`, or omitted for both.
        #[arg(long)]
        distribution: Option<ValuationDistribution>,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        step: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Newsvendor price; with --cost, prints a single optimum.
        #[arg(long, requires = "cost")]
        price: Option<f64>,
        #[arg(long, requires = "price")]
        cost: Option<f64>,
    },
}

fn load(config: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    Ok(cfg)
}

fn report_run(summary: &RunSummary) -> i32 {
    let m = &summary.manifest;
    println!(
        "sessions: {} complete, {} failed, {} pending",
        m.count(SessionStatus::Complete),
        m.count(SessionStatus::Failed),
        m.count(SessionStatus::Pending)
    );
    for s in m.failed() {
        eprintln!("failed {}: {}", s.id, s.error.as_deref().unwrap_or(""));
    }
    summary.exit_code()
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::ValidateConfig { config } => {
            let cfg = load(&config)?;
            let sessions = econ_audit_cli::run::plan_sessions(&cfg)?.len();
            econ_audit_cli::run::Inputs::prepare(&cfg)?;
            println!("ok: {} sessions, config hash {}", sessions, cfg.hash());
            Ok(EXIT_OK)
        }
        Command::Run {
            config,
            output,
            workers,
        } => {
            let cfg = load(&config)?;
            let opts = RunOptions {
                workers,
                ..RunOptions::default()
            };
            Ok(report_run(&run_experiment(&cfg, output.as_deref(), &opts)?))
        }
        Command::Resume {
            config,
            output,
            workers,
        } => {
            let cfg = load(&config)?;
            let opts = RunOptions {
                workers,
                ..RunOptions::default()
            };
            Ok(report_run(&resume_experiment(
                &cfg,
                output.as_deref(),
                &opts,
            )?))
        }
        Command::Analyze {
            config,
            run,
            humans,
        } => {
            let cfg = load(&config)?;
            let dir = run.unwrap_or_else(|| cfg.output_path());
            let report = analyze::analyze(&cfg, &dir, humans.as_deref())?;
            for s in report.human.iter().chain(&report.sources) {
                let ks = s
                    .ks_vs_human
                    .as_ref()
                    .map(|k| format!(" ks={:.4}", k.mean))
                    .unwrap_or_default();
                println!(
                    "{}: n={} pooled_entropy={:.4} mean_agent_entropy={:.4}{ks}",
                    s.source, s.n_agents, s.pooled_entropy, s.mean_agent_entropy
                );
            }
            if !report.failed_sessions.is_empty() {
                eprintln!(
                    "{} sessions excluded (see report.json)",
                    report.failed_sessions.len()
                );
            }
            println!("wrote {}", dir.join("analysis").display());
            Ok(EXIT_OK)
        }
        Command::GenHumans {
            task,
            n,
            seed,
            out,
            rounds,
            cube_root_fraction,
        } => {
            let traces = humans::generate_synthetic_humans(
                seed,
                n,
                task,
                rounds.unwrap_or_else(|| task.default_rounds()),
                cube_root_fraction,
            )?;
            let paths = humans::write_traces(&out, &traces)?;
            println!(
                "wrote {} SYNTHETIC traces to {}",
                paths.len(),
                out.display()
            );
            Ok(EXIT_OK)
        }
        Command::LintTemplates { dir, show } => {
            let set = match &dir {
                Some(d) => TemplateSet::from_dir(d)?,
                None => TemplateSet::builtin(),
            };
            let issues = set.lint();
            for i in &issues {
                println!("{i}");
            }
            if let Some(which) = show {
                let (task, cond) = which.split_once(':').ok_or_else(|| {
                    CliError::Config(format!("--show expects task:condition, got '{which}'"))
                })?;
                let task: Task = task.parse().map_err(CliError::Config)?;
                let spec = InterventionSpec::parse(cond, task)?;
                print!("{}", sample_prompts(&set, task, &spec)?);
            }
            if issues.is_empty() {
                println!("templates ok");
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_CONFIG)
            }
        }
        Command::Oracle {
            distribution,
            samples,
            step,
            seed,
            price,
            cost,
        } => {
            if let (Some(p), Some(c)) = (price, cost) {
                println!("price,cost,optimal_quantity");
                println!("{p},{c},{}", optimal_quantity(p, c)?);
                return Ok(EXIT_OK);
            }
            let dists = match distribution {
                Some(d) => vec![d],
                None => vec![ValuationDistribution::CubeRoot, ValuationDistribution::Cube],
            };
            println!("distribution,reserve,expected_profit");
            for d in dists {
                let curve = optimal_reserve(d, samples, step, seed)?;
                for (r, p) in &curve.curve {
                    println!("{},{r},{p:.4}", d.as_str());
                }
                eprintln!("{}: optimal reserve {}", d.as_str(), curve.best_reserve);
            }
            println!();
            println!("price,cost,optimal_quantity");
            let mut seen = Vec::new();
            for pc in default_price_cost_schedule(6) {
                if !seen.contains(&(pc.price.to_bits(), pc.cost.to_bits())) {
                    seen.push((pc.price.to_bits(), pc.cost.to_bits()));
                    println!(
                        "{},{},{}",
                        pc.price,
                        pc.cost,
                        optimal_quantity(pc.price, pc.cost)?
                    );
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
