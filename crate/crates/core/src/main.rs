use clap::Parser;

use distreg::cli::{run, Cli};

fn main() {
    distreg::heap::tune_allocator();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
