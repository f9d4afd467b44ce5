use clap::Parser;
use icann::cli::{exit_code, init_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
