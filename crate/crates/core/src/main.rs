use clap::Parser;

use capsule_opt::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(jobs) = cli.command.jobs() {
        // Ignore failure: the global pool can only be sized once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    if let Err(err) = run(cli) {
        eprintln!("error: {}", err.message());
        std::process::exit(err.exit_code());
    }
}
