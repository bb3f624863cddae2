use clap::Parser;
use fbma::cli::{run, Args};

fn main() {
    let args = Args::parse();
    let outcome = run(&args);
    if outcome.exit_code != 0 {
        eprintln!("fbma: {:?}: {}", outcome.status, outcome.message);
    }
    std::process::exit(outcome.exit_code);
}
