//! Reference function execution unit.

use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Parser;
use gatefaas::feu::{self, builtin, BUILTIN_LABELS};
use log::{debug, error, info};

#[derive(Debug, Parser)]
#[command(about = "Serve one function on the address in a Boot file")]
struct Args {
    /// File holding `HOST:PORT` for the inner server.
    #[arg(long, required_unless_present = "probe")]
    boot: Option<PathBuf>,
    /// Function to serve.
    #[arg(long)]
    label: String,
    /// Only check that the function is available, then exit.
    #[arg(long)]
    probe: bool,
    /// Exit when the launching process goes away.
    #[arg(long)]
    watch_parent: bool,
}

fn watch_parent() {
    // SAFETY: getppid has no preconditions.
    let parent = unsafe { libc::getppid() };
    thread::spawn(move || loop {
        thread::sleep(Duration::from_millis(200));
        if unsafe { libc::getppid() } != parent {
            std::process::exit(0);
        }
    });
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::panic::set_hook(Box::new(|info| debug!("{info}")));
    let args = Args::parse();
    let Some(function) = builtin(&args.label) else {
        error!("no function `{}` (available: {})", args.label, BUILTIN_LABELS.join(", "));
        return ExitCode::FAILURE;
    };
    if args.probe {
        return ExitCode::SUCCESS;
    }
    if args.watch_parent {
        watch_parent();
    }
    let boot = args.boot.expect("required unless probing");
    let listener = match feu::boot(&boot) {
        Ok(l) => l,
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    info!("serving {} on {:?}", args.label, listener.local_addr());
    match feu::serve(listener, &function) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
