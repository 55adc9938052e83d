use budgeted_auctions::cli::{run, Cli};
use clap::Parser;

fn main() {
    std::process::exit(run(Cli::parse()));
}
