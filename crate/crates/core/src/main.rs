use clap::Parser;
use plaque_bifurcation::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
