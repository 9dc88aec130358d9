//! Worker node.

use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Parser;
use gatefaas::node::{BackendKind, Node, NodeConfig};
use log::{error, info};

#[derive(Debug, Parser)]
#[command(about = "Pair with a controller and run FEUs for one cluster")]
struct Args {
    /// Controller clerk address, HOST:PORT.
    #[arg(long)]
    clerk: String,
    #[arg(long)]
    cluster: String,
    /// `process` or `container`.
    #[arg(long, default_value = "process")]
    backend: BackendKind,
    /// Gate polling interval in milliseconds.
    #[arg(long, default_value_t = 10)]
    poll_ms: u64,
    /// Upper bound of the idle polling backoff in milliseconds.
    #[arg(long, default_value_t = 200)]
    backoff_ms: u64,
    #[arg(long, default_value = "gatefaas-node")]
    work_dir: PathBuf,
    /// FEU program; defaults to the `feu` next to this binary.
    #[arg(long)]
    feu: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut config = NodeConfig::new(args.clerk, args.cluster, args.work_dir);
    config.backend = args.backend;
    config.poll_interval = Duration::from_millis(args.poll_ms);
    config.poll_backoff_max = Duration::from_millis(args.backoff_ms.max(args.poll_ms));
    if let Some(p) = args.feu {
        config.feu_program = p;
    }
    let node = match Node::pair(config) {
        Ok(n) => n,
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    info!("node in cluster `{}` waiting for scaling rounds", node.cluster());
    loop {
        thread::park();
    }
}
