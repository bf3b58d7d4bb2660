use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ibregion::{run, Command};

/// Rate-relevance curves, region membership, refinability certificates and
/// coding simulations for the multi-layer information bottleneck.
#[derive(Parser)]
#[command(name = "ibregion", version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args.command, &args.config, args.output, args.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ibregion: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
