//! Batch command line: read a TOML config, run its tasks, write trajectories
//! and `report.json`.
//!
//! Exit codes: 0 all tasks pass, 1 a check failed, 2 configuration error,
//! 3 runtime numerical failure.

pub mod config;
pub mod export;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{load_config, parse_config, ConfigError, Format, RunConfig, TaskKind};
pub use export::{export_trajectory, import_trajectory};
pub use run::{run, Model, RunReport, Status, TaskReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Parser)]
#[command(
    name = "contact-hj",
    version,
    about = "Verify complete solutions of the contact Hamilton-Jacobi equation and integrate by quadratures"
)]
pub struct Args {
    /// Path of the TOML run configuration.
    pub config: PathBuf,
    /// Run only tasks with this name or kind (repeatable).
    #[arg(long)]
    pub task: Vec<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sampling seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance override such as `compare=1e-7` (repeatable).
    #[arg(long, value_name = "KEY=VALUE")]
    pub tolerance: Vec<String>,
}

/// Load the config named by `args` and apply the command-line overrides.
pub fn resolve(args: &Args) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| ConfigError::Read {
        path: args.config.clone(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    for item in &args.tolerance {
        let (key, value) = item.split_once('=').ok_or_else(|| {
            ConfigError::Invalid(format!("--tolerance expects KEY=VALUE, got '{item}'"))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            ConfigError::Invalid(format!("--tolerance {key}: '{value}' is not a number"))
        })?;
        config.tolerances.set(key.trim(), value)?;
    }
    if !args.task.is_empty() {
        let named = config.named_tasks();
        let keep: Vec<_> = named
            .into_iter()
            .filter(|task| {
                args.task
                    .iter()
                    .any(|wanted| *wanted == task.name || wanted == task.spec.kind.as_str())
            })
            .map(|task| config::TaskSpec {
                name: Some(task.name),
                ..task.spec
            })
            .collect();
        if keep.is_empty() {
            return Err(ConfigError::Invalid(format!(
                "--task {:?} matches no configured task",
                args.task
            )));
        }
        config.tasks = keep;
    }
    config.validate()?;
    Ok(config)
}

/// Full command: resolve, build, run, report. Returns the process exit code.
pub fn execute(args: &Args) -> i32 {
    let config = match resolve(args) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("configuration error: {err}");
            return EXIT_CONFIG;
        }
    };
    let model = match Model::build(&config) {
        Ok(built) => built,
        Err(err) => {
            eprintln!("configuration error: {err}");
            return EXIT_CONFIG;
        }
    };
    match run(&config, &model, &config.output.dir) {
        Ok(report) => {
            for task in &report.tasks {
                let status = format!("{:?}", task.status).to_lowercase();
                match &task.message {
                    Some(msg) => println!("{:<20} {status:<8} {msg}", task.name),
                    None => println!("{:<20} {status}", task.name),
                }
            }
            println!(
                "report: {}",
                config.output.dir.join("report.json").display()
            );
            report.exit_code()
        }
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_NUMERICAL
        }
    }
}
