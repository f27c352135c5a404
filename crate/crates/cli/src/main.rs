use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use xcf_cli::commands::{self, Prepared};
use xcf_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "xcf", about = "Cross curvature flow simulator on slab charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a configuration and write diagnostics and snapshots.
    Run {
        config: PathBuf,
        /// Allow a flow sign that contradicts the curvature sign of the data.
        #[arg(long)]
        force_sign: bool,
        /// Parent of the run directory.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Print the symbol matrices at a unit covector and check their structure.
    CheckSymbol {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check curvature identities on preset metrics.
    VerifyIdentities {
        /// hyperbolic-halfspace, sphere-stereographic, sphere-hopf, flat or random.
        #[arg(long, default_values_t = vec!["hyperbolic-halfspace".to_string()])]
        preset: Vec<String>,
        #[arg(long, default_values_t = vec![16])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a space-form configuration and compare with the exact solution.
    OracleSpaceform {
        config: PathBuf,
        #[arg(long)]
        force_sign: bool,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-2)]
        max_error: f64,
    },
    /// Compare the linear response of the cross curvature with its symbol.
    LinearizeCheck {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lower mode; the upper mode is twice this.
        #[arg(long, default_value_t = 4)]
        mode: usize,
        #[arg(long, default_value_t = 1.6)]
        min_ratio: f64,
    },
    /// Recover the unmodified flow at `t_end` and measure its residual.
    PullbackCheck {
        config: PathBuf,
        #[arg(long)]
        force_sign: bool,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, default_value_t = 5e-2)]
        max_residual: f64,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load(path: &PathBuf, out: &Path, force_sign: bool) -> std::result::Result<Prepared, Failure> {
    let config = RunConfig::from_file(path).map_err(Failure::Usage)?;
    commands::prepare(config, out, force_sign).map_err(Failure::Usage)
}

fn dispatch(cmd: Command) -> std::result::Result<bool, Failure> {
    let rt = |r: Result<bool>| r.map_err(Failure::Runtime);
    match cmd {
        Command::Run {
            config,
            force_sign,
            out,
        } => rt(commands::cmd_run(load(&config, &out, force_sign)?)),
        Command::CheckSymbol { seed } => rt(commands::cmd_check_symbol(seed)),
        Command::VerifyIdentities { preset, n, seed } => {
            rt(commands::cmd_verify_identities(&preset, &n, seed))
        }
        Command::OracleSpaceform {
            config,
            force_sign,
            out,
            max_error,
        } => rt(commands::cmd_oracle_spaceform(
            load(&config, &out, force_sign)?,
            max_error,
        )),
        Command::LinearizeCheck {
            n,
            seed,
            mode,
            min_ratio,
        } => rt(commands::cmd_linearize_check(n, seed, mode, min_ratio)),
        Command::PullbackCheck {
            config,
            force_sign,
            out,
            max_residual,
        } => rt(commands::cmd_pullback_check(
            load(&config, &out, force_sign)?,
            max_residual,
        )),
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("XCF_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|e| anyhow::anyhow!("XCF_THREADS = '{v}': {e}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
