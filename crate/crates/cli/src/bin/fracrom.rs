use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracrom_cli::commands;
use fracrom_cli::{CliError, RunConfig};

// Closed pipes (`fracrom ... | head`) are not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "fracrom", version, about = "Reduced-order models for parameterized fractional PDEs")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FRACROM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it with its reports to the output directory.
    Offline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a trained model at one parameter.
    Online {
        #[arg(long)]
        rom: PathBuf,
        /// Comma-separated parameter components.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        mu: Vec<f64>,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "solution.bin")]
        out: PathBuf,
    },
    /// Full-order solve at one parameter.
    Fom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        mu: Vec<f64>,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "fom.bin")]
        out: PathBuf,
    },
    /// Compare a trained model with the full-order solver over the test set.
    Sweep {
        #[arg(long)]
        rom: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Time the offline variants and per-query costs.
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    match cli.command {
        Command::Offline { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = commands::cmd_offline(&cfg)?;
            say!(
                "wrote {} (K = {}, {} samples)",
                out.rom_path.display(),
                out.rom.rank(),
                out.report.samples.len()
            );
        }
        Command::Online {
            rom,
            mu,
            alpha,
            out,
        } => {
            commands::cmd_online(&rom, &mu, alpha, &out)?;
            say!("wrote {}", out.display());
        }
        Command::Fom {
            config,
            mu,
            alpha,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_fom(&cfg, &mu, alpha, &out)?;
            say!("wrote {}", out.display());
        }
        Command::Sweep { rom, config } => {
            let cfg = RunConfig::load(&config)?;
            let s = commands::cmd_sweep(&rom, &cfg)?;
            say!(
                "{} queries, max error {:.3e}, mean error {:.3e}",
                s.queries, s.max_error, s.mean_error
            );
            for a in &s.per_alpha {
                say!("  alpha {:<5} max {:.3e} mean {:.3e}", a.alpha, a.max_error, a.mean_error);
            }
        }
        Command::Bench { config } => {
            let cfg = RunConfig::load(&config)?;
            let rows = commands::cmd_bench(&cfg)?;
            for r in rows.iter().filter(|r| r.unit == "ratio") {
                say!("{} {}: {:.1}", r.stage, r.method, r.value);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
