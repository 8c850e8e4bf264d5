use std::path::PathBuf;

use clap::Parser;

use martmax_cli::{run, CliArgs};

/// Bound evaluation and Monte Carlo harness for maxima of martingale sums.
/// The command itself (verify, bound, simulate, sweep, selftest) is chosen
/// inside the config file.
#[derive(Parser)]
#[command(name = "martmax", version, about)]
struct Args {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output CSV path, overriding output.csv from the config.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (0 = implementation default).
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// Run only the named suite (verify/selftest commands).
    #[arg(long)]
    only: Option<String>,
}

fn main() {
    let args = Args::parse();
    let code = run(&CliArgs {
        config: args.config,
        out: args.out,
        threads: args.threads,
        only: args.only,
    });
    std::process::exit(code);
}
