//! Broker: submit FERs, collect RETs, run the reference scenarios.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use gatefaas::broker::bench::{collect_until, submit_batch, RunReport};
use gatefaas::broker::scenario::{
    bundled_functions, scenario_a, scenario_b, DeskCluster, DeskOptions, COLLECT_DEADLINE, SCENARIO_B_SEED,
};
use gatefaas::broker::{Methods, RemoteBroker};
use gatefaas::core::codec;
use gatefaas::core::{AutoScaleDirective, FunctionLabel, ScalingTable, ValueMap};
use log::error;

#[derive(Debug, Parser)]
#[command(about = "Drive a controller through its Methods space")]
struct Args {
    /// Broker facade of a running controller. Without it a desk cluster
    /// (controller and one node in this process) is started.
    #[arg(long, global = true)]
    controller: Option<String>,
    /// Cluster to scale when talking to a remote controller.
    #[arg(long, global = true, default_value = "desk")]
    cluster: String,
    /// Function packages for the desk cluster.
    #[arg(long, global = true)]
    functions: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Submit a batch of FERs and report latency.
    Run {
        #[arg(long)]
        label: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Inputs `x` as a JSON object.
        #[arg(long, default_value = "{}")]
        input: String,
        /// Units to scale to before submitting.
        #[arg(long, default_value_t = 1)]
        feus: u32,
        /// Print every RET as a JSON line.
        #[arg(long)]
        print: bool,
    },
    /// Repeated 1000-FER hellocot batches; CSV on stdout or `--csv`.
    ScenarioA {
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        feus: u32,
        #[arg(long, default_value_t = 1000)]
        batch: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Seeded FFT blocks checked against a direct DFT.
    ScenarioB {
        #[arg(long, default_value_t = 4)]
        feus: u32,
        #[arg(long, default_value_t = SCENARIO_B_SEED)]
        seed: u64,
    },
    /// Send an autoscale directive read from a JSON file.
    Scale {
        #[arg(long)]
        directive: PathBuf,
    },
}

enum Target {
    Desk(DeskCluster),
    Remote(RemoteBroker, String),
}

impl Target {
    fn methods(&self) -> &dyn Methods {
        match self {
            Target::Desk(d) => d.methods(),
            Target::Remote(r, _) => r,
        }
    }

    fn scale(&self, label: &str, feus: u32) -> Result<(), String> {
        let table = DeskCluster::table(label, feus, 0.1);
        match self {
            Target::Desk(d) => d.scale(vec![table], Duration::from_secs(30)).map(|_| ()).map_err(|e| e.to_string()),
            Target::Remote(r, cluster) => {
                let directive = AutoScaleDirective {
                    clusters: [(cluster.clone(), vec![table])].into(),
                };
                r.autoscale(&directive).map(|_| ()).map_err(|e| e.to_string())
            }
        }
    }
}

fn target(args: &Args, labels: &[&str]) -> Result<Target, String> {
    if let Some(addr) = &args.controller {
        return Ok(Target::Remote(RemoteBroker::new(addr.clone()), args.cluster.clone()));
    }
    let mut opts = DeskOptions::new(labels);
    opts.functions_root = args.functions.clone().unwrap_or_else(bundled_functions);
    DeskCluster::start(&opts).map(Target::Desk).map_err(|e| e.to_string())
}

fn summary(r: &RunReport) {
    eprintln!(
        "submitted {} ok {} error {} missing {} mean {:.3} ms stddev {:.3} ms wall {:.3} s",
        r.submitted,
        r.completed,
        r.errored,
        r.missing.len(),
        r.mean_ms,
        r.stddev_ms,
        r.wall.as_secs_f64()
    );
}

fn run(args: Args) -> Result<(), String> {
    match &args.command {
        Cmd::Run {
            label,
            count,
            input,
            feus,
            print,
        } => {
            let x: ValueMap = codec::parse_text(input).map_err(|e| format!("--input: {e}"))?;
            let t = target(&args, &[label.as_str()])?;
            t.scale(label, *feus)?;
            let l = FunctionLabel::new(label.as_str()).map_err(|e| e.to_string())?;
            let sub = submit_batch(t.methods(), &l, *count, "run", |_| x.clone()).map_err(|e| e.to_string())?;
            let report = collect_until(t.methods(), &sub, COLLECT_DEADLINE).map_err(|e| e.to_string())?;
            if *print {
                for rec in &report.records {
                    println!("{}", codec::to_text(&rec.ret.to_map()).map_err(|e| e.to_string())?);
                }
            }
            summary(&report);
        }
        Cmd::ScenarioA { iters, feus, batch, csv } => {
            let t = target(&args, &["hellocot"])?;
            t.scale("hellocot", *feus)?;
            let report = scenario_a(t.methods(), *iters, *batch).map_err(|e| e.to_string())?;
            let mut out = Vec::new();
            report.write_csv(&mut out).map_err(|e| e.to_string())?;
            match csv {
                Some(p) => fs::write(p, &out).map_err(|e| format!("{}: {e}", p.display()))?,
                None => print!("{}", String::from_utf8_lossy(&out)),
            }
            eprintln!(
                "mean {:.3} ms, standalone hellocot {:.6} ms, overhead {:.3} ms",
                report.mean_of_means_ms(),
                report.standalone_ms,
                report.overhead_ms()
            );
        }
        Cmd::ScenarioB { feus, seed } => {
            let t = target(&args, &["fft"])?;
            t.scale("fft", *feus)?;
            let report = scenario_b(t.methods(), *seed).map_err(|e| e.to_string())?;
            summary(&report.run);
            println!("blocks {} max_error {:e} failures {}", report.blocks, report.max_error, report.failures.len());
            for f in &report.failures {
                eprintln!("  {f}");
            }
            if !report.failures.is_empty() || report.max_error > 1e-9 {
                return Err("scenario B failed".into());
            }
        }
        Cmd::Scale { directive } => {
            let Some(addr) = &args.controller else {
                return Err("scale needs --controller".into());
            };
            let text = fs::read_to_string(directive).map_err(|e| format!("{}: {e}", directive.display()))?;
            let map = codec::parse_text(&text).map_err(|e| e.to_string())?;
            let d = AutoScaleDirective::from_map(&map).map_err(|e| e.to_string())?;
            let round = RemoteBroker::new(addr.clone()).autoscale(&d).map_err(|e| e.to_string())?;
            let units: usize = d.clusters.values().flatten().map(ScalingTable::unit_count).sum();
            println!("round {round} ({units} units requested)");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
