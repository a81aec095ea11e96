use clap::Parser;

use anharmonic_probe::{run, Invocation};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let inv = Invocation::parse();
    if let Err(e) = run(&inv) {
        eprintln!("anharmonic-probe: {e}");
        std::process::exit(e.exit_code());
    }
}
