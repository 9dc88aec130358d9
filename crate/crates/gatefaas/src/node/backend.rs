//! Execution backends: how an assembled image becomes running FEUs.
//!
//! The process backend runs each FEU as a child process of the `feu`
//! binary. The container backend builds an image from the recipe and
//! runs each FEU as a container with a CPU quota, mapping the fixed inner
//! port to a distinct loopback port.

use std::fs;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use gatefaas_core::FunctionLabel;
use log::debug;
use thiserror::Error;

use crate::feu::write_boot_file;
use crate::net::free_ports;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("build of `{label}` failed:\n{log}")]
    Build { label: FunctionLabel, log: String },
    #[error("cannot launch unit for `{label}`: {reason}")]
    Spawn { label: FunctionLabel, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A deployed function image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub label: FunctionLabel,
    pub digest: String,
    pub id: String,
    pub dir: PathBuf,
}

/// A running unit as seen by the node.
pub trait FeuProcess: Send {
    fn endpoint(&self) -> SocketAddr;
    fn pid(&self) -> Option<u32>;
    fn has_exited(&mut self) -> bool;
    /// Waits up to `timeout` for the unit to exit on its own.
    fn wait_exit(&mut self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            if self.has_exited() {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }
    fn kill(&mut self);
}

pub trait ExecutionBackend: Send + Sync {
    fn name(&self) -> &'static str;
    /// Build recipe written into every image directory.
    fn recipe(&self, label: &FunctionLabel) -> String;
    /// Turns an assembled image directory into a runnable image id.
    fn build(&self, label: &FunctionLabel, digest: &str, dir: &Path) -> Result<String, BackendError>;
    /// Starts one unit. `run_dir` is a fresh directory for its Boot file.
    fn spawn(&self, image: &Image, cpu_portion: f64, run_dir: &Path) -> Result<Box<dyn FeuProcess>, BackendError>;
}

static NEXT_UNIT: AtomicU64 = AtomicU64::new(0);

/// A fresh per-unit directory under `root`.
pub fn unit_dir(root: &Path, label: &FunctionLabel) -> io::Result<PathBuf> {
    let n = NEXT_UNIT.fetch_add(1, Ordering::Relaxed);
    let dir = root.join(format!("{label}-{}-{n}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Niceness for a CPU portion: a full CPU runs at the node's own
/// priority, smaller portions get proportionally lower priority.
pub fn niceness(cpu_portion: f64) -> i32 {
    ((1.0 - cpu_portion.clamp(0.0, 1.0)) * 10.0).round() as i32
}

#[derive(Debug, Clone)]
pub struct ProcessBackend {
    program: PathBuf,
    host: IpAddr,
    /// Lower a unit's scheduler priority according to its CPU portion.
    pub apply_priority: bool,
}

impl ProcessBackend {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ProcessBackend {
            program: program.into(),
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            apply_priority: true,
        }
    }

    pub fn program(&self) -> &Path {
        &self.program
    }
}

pub struct ChildUnit {
    child: Child,
    endpoint: SocketAddr,
    exited: bool,
}

impl FeuProcess for ChildUnit {
    fn endpoint(&self) -> SocketAddr {
        self.endpoint
    }

    fn pid(&self) -> Option<u32> {
        Some(self.child.id())
    }

    fn has_exited(&mut self) -> bool {
        if !self.exited {
            self.exited = matches!(self.child.try_wait(), Ok(Some(_)));
        }
        self.exited
    }

    fn kill(&mut self) {
        if !self.exited {
            let _ = self.child.kill();
            let _ = self.child.wait();
            self.exited = true;
        }
    }
}

impl Drop for ChildUnit {
    fn drop(&mut self) {
        self.kill();
    }
}

fn set_priority(pid: u32, nice: i32) {
    // SAFETY: setpriority only reads its integer arguments.
    let rc = unsafe { libc::setpriority(libc::PRIO_PROCESS, pid as libc::id_t, nice) };
    if rc != 0 {
        debug!("setpriority({pid}, {nice}) failed: {}", io::Error::last_os_error());
    }
}

impl ExecutionBackend for ProcessBackend {
    fn name(&self) -> &'static str {
        "process"
    }

    fn recipe(&self, label: &FunctionLabel) -> String {
        format!(
            "# process backend launch recipe\nprogram = {}\nargs = --boot <unit>/Boot --label {label} --watch-parent\n",
            self.program.display()
        )
    }

    /// Asks the unit program whether it can serve `label`.
    fn build(&self, label: &FunctionLabel, digest: &str, _dir: &Path) -> Result<String, BackendError> {
        let out = Command::new(&self.program)
            .args(["--probe", "--label", label.as_str()])
            .stdin(Stdio::null())
            .output()
            .map_err(|e| BackendError::Build {
                label: label.clone(),
                log: format!("cannot run {}: {e}", self.program.display()),
            })?;
        if !out.status.success() {
            return Err(BackendError::Build {
                label: label.clone(),
                log: format!(
                    "{}{}",
                    String::from_utf8_lossy(&out.stdout),
                    String::from_utf8_lossy(&out.stderr)
                ),
            });
        }
        Ok(format!("process:{label}@{}", &digest[..digest.len().min(12)]))
    }

    fn spawn(&self, image: &Image, cpu_portion: f64, run_dir: &Path) -> Result<Box<dyn FeuProcess>, BackendError> {
        let port = free_ports(1)?[0];
        let endpoint = SocketAddr::new(self.host, port);
        let boot = run_dir.join("Boot");
        write_boot_file(&boot, endpoint)?;
        let child = Command::new(&self.program)
            .arg("--boot")
            .arg(&boot)
            .args(["--label", image.label.as_str(), "--watch-parent"])
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .map_err(|e| BackendError::Spawn {
                label: image.label.clone(),
                reason: format!("{}: {e}", self.program.display()),
            })?;
        if self.apply_priority {
            set_priority(child.id(), niceness(cpu_portion));
        }
        Ok(Box::new(ChildUnit {
            child,
            endpoint,
            exited: false,
        }))
    }
}

/// Runs units as containers through the `docker` command line.
#[derive(Debug, Clone)]
pub struct ContainerBackend {
    docker: String,
    program: PathBuf,
    inner_port: u16,
}

impl ContainerBackend {
    pub const INNER_PORT: u16 = 5000;

    pub fn new(program: impl Into<PathBuf>) -> Self {
        ContainerBackend {
            docker: "docker".into(),
            program: program.into(),
            inner_port: Self::INNER_PORT,
        }
    }

    fn docker(&self, args: &[&str]) -> io::Result<std::process::Output> {
        Command::new(&self.docker).args(args).stdin(Stdio::null()).output()
    }
}

pub struct ContainerUnit {
    docker: String,
    id: String,
    endpoint: SocketAddr,
    exited: bool,
}

impl FeuProcess for ContainerUnit {
    fn endpoint(&self) -> SocketAddr {
        self.endpoint
    }

    fn pid(&self) -> Option<u32> {
        None
    }

    fn has_exited(&mut self) -> bool {
        if !self.exited {
            let running = Command::new(&self.docker)
                .args(["inspect", "-f", "{{.State.Running}}", &self.id])
                .output()
                .map(|o| o.status.success() && String::from_utf8_lossy(&o.stdout).trim() == "true")
                .unwrap_or(false);
            self.exited = !running;
        }
        self.exited
    }

    fn kill(&mut self) {
        if !self.exited {
            let _ = Command::new(&self.docker)
                .args(["rm", "-f", &self.id])
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status();
            self.exited = true;
        }
    }
}

impl Drop for ContainerUnit {
    fn drop(&mut self) {
        self.kill();
    }
}

impl ExecutionBackend for ContainerBackend {
    fn name(&self) -> &'static str {
        "container"
    }

    fn recipe(&self, label: &FunctionLabel) -> String {
        format!(
            "FROM debian:bookworm-slim\n\
             COPY feu /usr/local/bin/feu\n\
             COPY func.py requirements.txt /opt/feu/\n\
             EXPOSE {port}\n\
             ENTRYPOINT [\"/usr/local/bin/feu\", \"--boot\", \"/opt/feu/Boot\", \"--label\", \"{label}\"]\n",
            port = self.inner_port
        )
    }

    fn build(&self, label: &FunctionLabel, digest: &str, dir: &Path) -> Result<String, BackendError> {
        fs::copy(&self.program, dir.join("feu"))?;
        fs::write(dir.join("Dockerfile"), self.recipe(label))?;
        let tag = format!("gatefaas/{label}:{}", &digest[..digest.len().min(12)]);
        let dir_arg = dir.display().to_string();
        let out = self
            .docker(&["build", "-q", "-t", &tag, &dir_arg])
            .map_err(|e| BackendError::Build {
                label: label.clone(),
                log: format!("cannot run docker: {e}"),
            })?;
        if !out.status.success() {
            return Err(BackendError::Build {
                label: label.clone(),
                log: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(tag)
    }

    fn spawn(&self, image: &Image, cpu_portion: f64, run_dir: &Path) -> Result<Box<dyn FeuProcess>, BackendError> {
        let port = free_ports(1)?[0];
        let boot = run_dir.join("Boot");
        write_boot_file(&boot, SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), self.inner_port))?;
        let publish = format!("127.0.0.1:{port}:{}", self.inner_port);
        let mount = format!("{}:/opt/feu/Boot:ro", boot.display());
        let cpus = format!("{cpu_portion}");
        let out = self
            .docker(&["run", "-d", "--rm", "--cpus", &cpus, "-p", &publish, "-v", &mount, &image.id])
            .map_err(|e| BackendError::Spawn {
                label: image.label.clone(),
                reason: format!("cannot run docker: {e}"),
            })?;
        if !out.status.success() {
            return Err(BackendError::Spawn {
                label: image.label.clone(),
                reason: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(Box::new(ContainerUnit {
            docker: self.docker.clone(),
            id: String::from_utf8_lossy(&out.stdout).trim().to_owned(),
            endpoint: SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), port),
            exited: false,
        }))
    }
}
