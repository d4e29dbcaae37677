use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use maif_core::approximator::Checkpoint;
use maif_core::grid::io::load_scenario;
use maif_core::harness::{
    cmd_eval, cmd_generate, cmd_plan, cmd_report, cmd_train, cmd_validate, plan_instance, write_csv, write_rows,
    ExperimentSpec, Method, Validated,
};
use maif_core::learner::TrainingConfig;

#[derive(Parser)]
#[command(name = "maif", version, about = "Moving agents in formation: planners, training and evaluation")]
struct Cli {
    /// Overrides the seed of the experiment or training config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Experiment (generate, plan, eval) or training (train) config in TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write map and scenario files for every instance of the experiment.
    Generate,
    /// Run spp or jsa on the experiment's instances, or on one scenario.
    Plan {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        /// Lambdas for spp, epsilons for jsa.
        #[arg(long, value_delimiter = ',')]
        params: Vec<f64>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Train a policy and write checkpoint.json and log.csv.
    Train {
        #[arg(long)]
        episodes: Option<u64>,
    },
    /// Roll out a checkpoint (mfceq) or the random baseline over the experiment.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Check a scenario and optionally a solution file against it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Require starts and goals inside clear corners of this size.
        #[arg(long)]
        corner: Option<usize>,
    },
    /// Aggregate result files into summary.csv and points.csv.
    Report { files: Vec<PathBuf> },
}

fn experiment(cli: &Cli) -> Result<ExperimentSpec> {
    let path = cli.config.as_ref().context("--config <experiment.toml> is required")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec = ExperimentSpec::from_toml(&text)?;
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn write_results(path: &Path, rows: &[maif_core::harness::ResultRow]) -> Result<()> {
    fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    write_rows(rows, fs::File::create(path)?)?;
    log::info!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Generate => {
            let spec = experiment(cli)?;
            let files = cmd_generate(&spec, &cli.out)?;
            log::info!("wrote {} files to {}", files.len(), cli.out.display());
        }
        Command::Plan {
            scenario: Some(scenario),
            method,
            params,
            horizon,
        } => {
            let method = method.context("--method is required with --scenario")?;
            if params.is_empty() {
                bail!("--params is required with --scenario");
            }
            let (_, inst) = load_scenario(scenario)?;
            let planned = plan_instance(&inst, cli.seed.unwrap_or(0), 0, method, params, *horizon)?;
            fs::create_dir_all(&cli.out)?;
            for p in &planned {
                if let Some(sol) = &p.solution {
                    fs::write(cli.out.join(format!("solution-{method}-{}.json", p.row.param)), sol.to_json())?;
                }
            }
            let rows: Vec<_> = planned.into_iter().map(|p| p.row).collect();
            write_results(&cli.out.join("results.csv"), &rows)?;
        }
        Command::Plan { scenario: None, .. } => {
            let spec = experiment(cli)?;
            let rows = cmd_plan(&spec, Some(&cli.out))?;
            write_results(&cli.out.join("results.csv"), &rows)?;
        }
        Command::Train { episodes } => {
            let mut config = match &cli.config {
                Some(p) => TrainingConfig::load(p)?,
                None => TrainingConfig::default(),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(e) = episodes {
                config.episodes = *e;
            }
            config.validate()?;
            let outcome = cmd_train(&config, &cli.out)?;
            let successes = outcome.log.iter().filter(|r| r.success).count();
            log::info!("trained {} episodes, {} successful", outcome.log.len(), successes);
        }
        Command::Eval { checkpoint } => {
            let mut spec = experiment(cli)?;
            if let Some(path) = checkpoint {
                spec.checkpoint = Some(path.clone());
            }
            let ck = match (&spec.checkpoint, spec.method) {
                (Some(path), Method::Mfceq) => Some(Checkpoint::load(path)?),
                _ => None,
            };
            let rows = cmd_eval(&spec, ck.as_ref())?;
            write_results(&cli.out.join("results.csv"), &rows)?;
        }
        Command::Validate {
            scenario,
            solution,
            corner,
        } => match cmd_validate(scenario, solution.as_deref(), *corner)? {
            Validated::Instance => println!("valid scenario"),
            Validated::Solution(report) if report.valid => println!("valid solution"),
            Validated::Solution(report) => {
                let why = report.violation.map(|v| v.to_string()).unwrap_or_default();
                println!("invalid solution: {why}");
                return Ok(ExitCode::from(1));
            }
        },
        Command::Report { files } => {
            if files.is_empty() {
                bail!("no result files given");
            }
            let report = cmd_report(files)?;
            fs::create_dir_all(&cli.out)?;
            write_csv(&report.summary, fs::File::create(cli.out.join("summary.csv"))?)?;
            write_csv(&report.points, fs::File::create(cli.out.join("points.csv"))?)?;
            log::info!("summarized {} groups", report.summary.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
