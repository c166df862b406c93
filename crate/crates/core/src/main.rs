use clap::Parser;

fn main() {
    std::process::exit(dcap::cli::run(dcap::cli::Cli::parse()));
}
