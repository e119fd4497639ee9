use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use sector_xeb::{emit, run, ExperimentConfig, HarnessError, Mode, Overrides};

#[derive(Parser)]
#[command(name = "sector-xeb", version, about = "Sector-restricted XEB experiments on U(1)-symmetric random circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// pt-hist, depth-sweep, noise-sweep, collapse or fidelity-check.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Allow lattices above 100 qubits.
        #[arg(long)]
        large: bool,
    },
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let Command::Run { config, mode, seed, threads, out, large } = cli.command;
    let mode = mode.map(|m| m.parse::<Mode>()).transpose()?;
    let overrides = Overrides { mode, seed, threads, out, large };
    let resolved = ExperimentConfig::load(&config)?.resolve(&overrides)?;
    let started = Instant::now();
    eprintln!(
        "[sector-xeb] {} on {}x{} with n = {}, seed {}, {} thread(s)",
        resolved.config.mode,
        resolved.layout.rows(),
        resolved.layout.cols(),
        resolved.particles(),
        resolved.config.seed,
        resolved.config.threads
    );
    let result = run(&resolved)?;
    let files = emit(&result, &resolved.config.out)?;
    for f in &files {
        eprintln!("[sector-xeb] wrote {}", f.display());
    }
    eprintln!("[sector-xeb] finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
