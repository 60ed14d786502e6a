use std::collections::HashMap;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use super::handle::Mount;
use super::RuntimeError;
use crate::gateway::{Health, HealthStatus, CONTAINER_PORT};

pub const MODEL_MOUNT: &str = "/model";
pub const DATA_MOUNT: &str = "/data";
/// Overrides the gateway executable used by the process driver.
pub const BIN_ENV: &str = "HUBFORGE_BIN";
/// Overrides the container engine CLI used by the engine driver.
pub const ENGINE_ENV: &str = "HUBFORGE_ENGINE";

/// Everything a driver needs to launch one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchSpec {
    pub model: String,
    pub template_dir: Option<PathBuf>,
    pub image: Option<String>,
    pub host_port: u16,
    pub mounts: Vec<Mount>,
}

impl LaunchSpec {
    pub fn data_mount(&self) -> Option<&Path> {
        self.mounts.iter().find(|m| m.container == DATA_MOUNT).map(|m| m.host.as_path())
    }
}

/// Result of one readiness probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Probe {
    Ready,
    Starting,
    Failed(String),
    Unreachable,
}

pub trait Driver: Send {
    fn tag(&self) -> &str;

    /// Errors with `PortInUse` when `port` cannot be bound on this host.
    fn check_port(&self, port: u16) -> Result<(), RuntimeError> {
        port_available(port)
    }

    fn launch(&mut self, spec: &LaunchSpec) -> Result<String, RuntimeError>;

    fn probe(&mut self, id: &str, host_port: u16) -> Probe;

    fn terminate(&mut self, id: &str) -> Result<(), RuntimeError>;
}

pub fn port_available(port: u16) -> Result<(), RuntimeError> {
    for host in ["0.0.0.0", "127.0.0.1"] {
        if TcpListener::bind((host, port)).is_err() {
            return Err(RuntimeError::PortInUse(port));
        }
    }
    Ok(())
}

/// Ephemeral port that was free at the time of the call.
pub fn free_port() -> std::io::Result<u16> {
    Ok(TcpListener::bind("127.0.0.1:0")?.local_addr()?.port())
}

/// GET `/health` on a local port.
pub fn http_probe(host_port: u16) -> Probe {
    let client = match reqwest::blocking::Client::builder().timeout(Duration::from_millis(750)).build() {
        Ok(c) => c,
        Err(_) => return Probe::Unreachable,
    };
    let Ok(resp) = client.get(format!("http://127.0.0.1:{host_port}/health")).send() else {
        return Probe::Unreachable;
    };
    match resp.json::<Health>() {
        Ok(Health { status: HealthStatus::Ready, .. }) => Probe::Ready,
        Ok(Health { status: HealthStatus::Starting, .. }) => Probe::Starting,
        Ok(Health { status: HealthStatus::Failed, stage }) => Probe::Failed(stage),
        Err(_) => Probe::Unreachable,
    }
}

/// Runs the gateway as a supervised child process of this host.
pub struct ProcessDriver {
    exe: PathBuf,
    artifact_dir: Option<PathBuf>,
    children: HashMap<String, Child>,
    next: u64,
}

impl ProcessDriver {
    pub fn new(exe: impl Into<PathBuf>) -> Self {
        Self { exe: exe.into(), artifact_dir: None, children: HashMap::new(), next: 0 }
    }

    pub fn with_artifact_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.artifact_dir = Some(dir.into());
        self
    }

    /// `$HUBFORGE_BIN`, else a `hubforge` executable beside or above the running one.
    pub fn locate() -> Result<Self, RuntimeError> {
        if let Some(p) = std::env::var_os(BIN_ENV) {
            return Ok(Self::new(p));
        }
        let unavailable = || RuntimeError::DriverUnavailable("process (hubforge executable not found; set HUBFORGE_BIN)".into());
        let current = std::env::current_exe().map_err(|_| unavailable())?;
        let name = format!("hubforge{}", std::env::consts::EXE_SUFFIX);
        if current.file_name().and_then(|n| n.to_str()) == Some(name.as_str()) {
            return Ok(Self::new(current));
        }
        let mut dir = current.parent();
        for _ in 0..3 {
            let Some(d) = dir else { break };
            let candidate = d.join(&name);
            if candidate.is_file() {
                return Ok(Self::new(candidate));
            }
            dir = d.parent();
        }
        Err(unavailable())
    }

    /// Arguments passed to the gateway executable.
    pub fn serve_args(&self, spec: &LaunchSpec, template: &Path) -> Vec<String> {
        let mut args = vec![
            "serve".to_string(),
            "--template".into(),
            template.display().to_string(),
            "--bind".into(),
            "127.0.0.1".into(),
            "--port".into(),
            spec.host_port.to_string(),
        ];
        if let Some(dir) = &self.artifact_dir {
            args.extend(["--artifacts".into(), dir.display().to_string()]);
        }
        if let Some(data) = spec.data_mount() {
            args.extend(["--data".into(), data.display().to_string()]);
        }
        args
    }
}

impl Driver for ProcessDriver {
    fn tag(&self) -> &str {
        "process"
    }

    fn launch(&mut self, spec: &LaunchSpec) -> Result<String, RuntimeError> {
        let template = spec
            .template_dir
            .as_deref()
            .filter(|d| d.join(crate::config::CONFIG_FILE).is_file())
            .ok_or_else(|| RuntimeError::ImageMissing(format!("no local template for `{}`", spec.model)))?;
        if !self.exe.is_file() {
            return Err(RuntimeError::DriverUnavailable(format!("process ({} not found)", self.exe.display())));
        }
        let child = Command::new(&self.exe)
            .args(self.serve_args(spec, template))
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| RuntimeError::Launch(e.to_string()))?;
        self.next += 1;
        let id = format!("proc-{}-{}", child.id(), self.next);
        self.children.insert(id.clone(), child);
        Ok(id)
    }

    fn probe(&mut self, id: &str, host_port: u16) -> Probe {
        if let Some(child) = self.children.get_mut(id) {
            if let Ok(Some(status)) = child.try_wait() {
                return Probe::Failed(format!("gateway process exited: {status}"));
            }
        }
        http_probe(host_port)
    }

    fn terminate(&mut self, id: &str) -> Result<(), RuntimeError> {
        if let Some(mut child) = self.children.remove(id) {
            let _ = child.kill();
            let _ = child.wait();
        }
        Ok(())
    }
}

impl Drop for ProcessDriver {
    fn drop(&mut self) {
        for (_, mut child) in self.children.drain() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Argv contract of the container-engine driver.
pub mod engine_argv {
    use super::*;

    pub fn version(engine: &str) -> Vec<String> {
        vec![engine.into(), "version".into()]
    }

    pub fn inspect(engine: &str, image: &str) -> Vec<String> {
        vec![engine.into(), "image".into(), "inspect".into(), image.into()]
    }

    pub fn pull(engine: &str, image: &str) -> Vec<String> {
        vec![engine.into(), "pull".into(), image.into()]
    }

    pub fn build(engine: &str, tag: &str, context: &Path, recipe: &str) -> Vec<String> {
        vec![
            engine.into(),
            "build".into(),
            "-t".into(),
            tag.into(),
            "-f".into(),
            context.join(recipe).display().to_string(),
            context.display().to_string(),
        ]
    }

    pub fn run(engine: &str, image: &str, host_port: u16, mounts: &[Mount]) -> Vec<String> {
        let mut argv = vec![engine.into(), "run".into(), "-d".into(), "--rm".into(), "-p".into(), format!("{host_port}:{CONTAINER_PORT}")];
        for m in mounts {
            let mode = if m.read_only { ":ro" } else { "" };
            argv.push("-v".into());
            argv.push(format!("{}:{}{mode}", m.host.display(), m.container));
        }
        argv.push(image.into());
        argv
    }

    pub fn stop(engine: &str, id: &str) -> Vec<String> {
        vec![engine.into(), "stop".into(), id.into()]
    }
}

/// Drives the host container CLI (`docker` by default).
pub struct EngineDriver {
    engine: String,
}

fn run_argv(argv: &[String]) -> Result<String, String> {
    let out = Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .output()
        .map_err(|e| format!("{}: {e}", argv[0]))?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

impl EngineDriver {
    /// Fails with `DriverUnavailable` when the engine CLI does not answer `version`.
    pub fn detect() -> Result<Self, RuntimeError> {
        let engine = std::env::var(ENGINE_ENV).unwrap_or_else(|_| "docker".into());
        run_argv(&engine_argv::version(&engine))
            .map_err(|e| RuntimeError::DriverUnavailable(format!("engine ({e})")))?;
        Ok(Self { engine })
    }
}

impl Driver for EngineDriver {
    fn tag(&self) -> &str {
        "engine"
    }

    fn launch(&mut self, spec: &LaunchSpec) -> Result<String, RuntimeError> {
        let image = spec
            .image
            .as_deref()
            .ok_or_else(|| RuntimeError::ImageMissing(format!("no image reference for `{}`", spec.model)))?;
        if run_argv(&engine_argv::inspect(&self.engine, image)).is_err() {
            run_argv(&engine_argv::pull(&self.engine, image)).map_err(|e| RuntimeError::ImageMissing(format!("{image}: {e}")))?;
        }
        run_argv(&engine_argv::run(&self.engine, image, spec.host_port, &spec.mounts)).map_err(RuntimeError::Launch)
    }

    fn probe(&mut self, _id: &str, host_port: u16) -> Probe {
        http_probe(host_port)
    }

    fn terminate(&mut self, id: &str) -> Result<(), RuntimeError> {
        run_argv(&engine_argv::stop(&self.engine, id)).map(|_| ()).map_err(RuntimeError::Launch)
    }
}
