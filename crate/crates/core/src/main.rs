use clap::{Parser, ValueEnum};
use parametrix::cli::{run, write_outcome, CliError, Command, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Coeffs,
    Kernel,
    Wavefront,
    PredictR,
    Scaling,
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Coeffs => Command::Coeffs,
            Cmd::Kernel => Command::Kernel,
            Cmd::Wavefront => Command::Wavefront,
            Cmd::PredictR => Command::PredictR,
            Cmd::Scaling => Command::Scaling,
            Cmd::Verify => Command::Verify,
        }
    }
}

/// Hadamard parametrices, wavefront estimation and scaling limits.
///
/// Exit codes: 0 success, 1 a suite failed or a computation diverged,
/// 2 malformed configuration or invalid input.
#[derive(Debug, Parser)]
#[command(name = "parametrix", version)]
struct Args {
    command: Cmd,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main_inner(args: &Args) -> Result<bool, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let command = Command::from(args.command);
    let outcome = run(command, &cfg)?;
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    write_outcome(&dir, command, &outcome)?;
    println!("{}: {} ({})", command.name(), if outcome.pass { "PASS" } else { "FAIL" }, dir.join(format!("{}.json", command.name())).display());
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
