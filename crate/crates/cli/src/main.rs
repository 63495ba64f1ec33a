use clap::Parser;
use twostage_cli::{commands, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
