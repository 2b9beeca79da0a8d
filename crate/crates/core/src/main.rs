use clap::Parser;

use contact_hj::cli::{execute, Args};

fn main() {
    std::process::exit(execute(&Args::parse()));
}
