use clap::Parser;

fn main() {
    let args = fracobs_cli::app::Args::parse();
    std::process::exit(fracobs_cli::app::main_with(args));
}
