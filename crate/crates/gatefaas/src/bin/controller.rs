//! Controller: clerk, scaling, events, gates and the broker facade.

use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use clap::Parser;
use gatefaas::controller::{self, InitConfig};
use log::{error, info};

#[derive(Debug, Parser)]
#[command(about = "Run a controller from an init file")]
struct Args {
    /// Init file with the ports table, clusters and functions root.
    #[arg(long)]
    init: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let handle = match InitConfig::load(&args.init).and_then(controller::start) {
        Ok(h) => h,
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    info!("clerk on {}, servers: {}", handle.clerk_addr(), handle.server_names().join(" "));
    loop {
        thread::park();
    }
}
