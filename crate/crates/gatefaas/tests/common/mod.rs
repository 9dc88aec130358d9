#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use gatefaas::broker::scenario::{DeskCluster, DeskOptions};

pub fn feu_program() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_feu"))
}

pub fn desk(labels: &[&str], nodes: usize) -> DeskCluster {
    let mut opts = DeskOptions::new(labels);
    opts.nodes = nodes;
    opts.feu_program = Some(feu_program());
    DeskCluster::start(&opts).expect("desk cluster")
}

pub fn desk_with(opts: DeskOptions) -> DeskCluster {
    let mut opts = opts;
    opts.feu_program.get_or_insert_with(feu_program);
    DeskCluster::start(&opts).expect("desk cluster")
}

pub fn process_alive(pid: u32) -> bool {
    Path::new(&format!("/proc/{pid}")).exists()
}

/// Polls `cond` every 10 ms until it holds or `timeout` passes.
pub fn eventually(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    loop {
        if cond() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
}

/// Copies the bundled packages for `labels` into a fresh directory.
pub fn copy_functions(labels: &[&str], into: &Path) -> PathBuf {
    let src = gatefaas::broker::scenario::bundled_functions();
    let root = into.join("functions");
    for l in labels {
        let dir = root.join(l);
        std::fs::create_dir_all(&dir).unwrap();
        for f in ["func.py", "requirements.txt"] {
            std::fs::copy(src.join(l).join(f), dir.join(f)).unwrap();
        }
    }
    root
}
