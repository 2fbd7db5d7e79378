use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use extended_crlb::scenario::{self, ConfigFile, RunOptions};
use extended_crlb::{CrlbError, Quadrature};
use serde_json::json;

/// Cramer-Rao bounds and estimator Monte Carlo for extended wideband targets.
#[derive(Parser, Debug)]
#[command(name = "extended-crlb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output root; each scenario writes into <DIR>/<name>/.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override every scenario's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Override the Monte Carlo trial count.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario file or a built-in scenario name.
    Run { config: String },
    /// List the built-in scenarios.
    List,
    /// Parse and validate a scenario file or built-in name without running it.
    Validate { config: String },
}

fn error_json(e: &CrlbError) -> serde_json::Value {
    let mut v = json!({ "status": "error", "kind": e.kind(), "message": e.to_string() });
    if let CrlbError::Config { path, .. } = e {
        v["path"] = json!(path);
    }
    v
}

fn execute(cli: &Cli) -> Result<serde_json::Value, CrlbError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CrlbError::Config {
                path: "--threads".into(),
                reason: "must be at least 1".into(),
            });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CrlbError::Io(e.to_string()))?;
    }
    if cli.trials == Some(0) {
        return Err(CrlbError::Config {
            path: "--trials".into(),
            reason: "must be at least 1".into(),
        });
    }
    match &cli.command {
        Command::List => {
            for s in scenario::catalog() {
                println!("{:<22} {}", s.name, s.description);
            }
            Ok(json!({ "status": "ok" }))
        }
        Command::Validate { config } => {
            let file = ConfigFile::load_or_builtin(config)?;
            file.validate()?;
            let names: Vec<_> = file.scenarios.iter().map(|s| s.name.clone()).collect();
            Ok(json!({ "status": "ok", "scenarios": names }))
        }
        Command::Run { config } => {
            let file = ConfigFile::load_or_builtin(config)?;
            let opts = RunOptions {
                out: cli.out.clone(),
                seed: cli.seed,
                trials: cli.trials,
            };
            let done = scenario::run_file(&file, &opts, &Quadrature::default())?;
            let runs: Vec<_> = done
                .iter()
                .map(|o| {
                    json!({
                        "scenario": o.name,
                        "dir": o.dir.display().to_string(),
                        "config_sha256": o.manifest.config_sha256,
                        "files": o.manifest.files.iter().map(|f| f.name.clone()).collect::<Vec<_>>(),
                    })
                })
                .collect();
            Ok(json!({ "status": "ok", "runs": runs }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            if !matches!(cli.command, Command::List) {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            match e {
                CrlbError::Config { .. } | CrlbError::InvalidParameter { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
