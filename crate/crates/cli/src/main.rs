use clap::Parser;
use spal_cli::cli::Cli;

fn main() {
    if let Err(e) = spal_cli::execute(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
