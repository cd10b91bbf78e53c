use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use solheat_cli::bench::{bench, bench_csv, load_config_dir};
use solheat_cli::reference::read_field;
use solheat_cli::tables::{parse_which, write_tables};
use solheat_cli::{load_config, run_with, CliError, ReferenceCache, RunOptions};
use solheat_core::diagnostics::relative_error;

#[derive(Parser)]
#[command(name = "solheat", version, about = "Nonlinear anisotropic heat-equation solvers for the plasma edge")]
struct Cli {
    /// Report progress on stderr.
    #[arg(long, global = true)]
    progress: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute (or fetch from the cache) the reference solution of a configuration.
    Reference { config: PathBuf },
    /// Run a configuration and compare it to a stored field.
    Compare {
        config: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Run every `*.conf` file of a directory and print a timing table.
    Bench {
        config_dir: PathBuf,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate table 1-6 (or `all`) as CSV.
    Tables {
        which: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let opts = RunOptions {
        cache: Some(ReferenceCache::from_env()),
        progress: cli.progress,
        no_output: false,
    };
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = load_config(&config)?;
            if out.is_some() {
                cfg.output.dir = out;
            }
            let report = run_with(&cfg, &opts)?;
            println!("steps,wall_seconds,relative_error");
            let err = report.relative_error.map(|e| format!("{e:e}")).unwrap_or_default();
            println!("{},{:.6},{}", report.steps, report.wall_seconds, err);
        }
        Command::Reference { config } => {
            let cfg = load_config(&config)?;
            let cache = opts.cache.clone().expect("set above");
            let (_, path, hit) = cache.load_or_compute(&cfg, cli.progress)?;
            println!("{}{}", path.display(), if hit { " (cached)" } else { "" });
        }
        Command::Compare { config, reference } => {
            let mut cfg = load_config(&config)?;
            cfg.reference = None;
            let reference = read_field(&reference)?;
            let report = run_with(&cfg, &opts)?;
            let err = relative_error(&report.fields[0].1, &reference)?;
            println!("{err:e}");
        }
        Command::Bench { config_dir, jobs, out } => {
            let configs = load_config_dir(&config_dir)?;
            let rows = bench(&configs, jobs, &opts);
            let text = bench_csv(&rows);
            match out {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io { path, source: e })?,
                None => print!("{text}"),
            }
        }
        Command::Tables { which, out, jobs } => {
            let Some(list) = parse_which(&which) else {
                return Err(solheat_cli::ConfigError::InvalidValue {
                    key: "which".into(),
                    reason: format!("`{which}` is not 1-6 or all"),
                }
                .into());
            };
            let rows = write_tables(&list, &out, jobs, &opts)?;
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!("{} runs, {failed} failed; tables written to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("solheat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
