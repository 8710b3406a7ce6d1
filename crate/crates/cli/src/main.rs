use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use shiftlab_cli::commands::{execute, Command};
use shiftlab_cli::{CliError, ExperimentConfig};

/// Distribution-shift laboratory: experiments on linear models trained by
/// gradient descent.
#[derive(Debug, Parser)]
#[command(name = "shiftlab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; files go to `<out>/<run_id>/<command>/`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (outputs, status) = pool.install(|| execute(args.command, &cfg));
    let dir = args.out.join(&cfg.run_id).join(args.command.name());
    if !outputs.files.is_empty() {
        outputs.write_all(&dir)?;
        eprintln!("wrote {} files to {}", outputs.files.len(), dir.display());
    }
    status
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
