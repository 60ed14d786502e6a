//! Model instance lifecycle: image planning, drivers, and the
//! created → starting → ready/failed → stopped state machine.

mod driver;
mod handle;
mod mock;
mod plan;

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

pub use driver::{
    engine_argv, free_port, http_probe, port_available, Driver, EngineDriver, LaunchSpec, Probe, ProcessDriver, BIN_ENV,
    DATA_MOUNT, ENGINE_ENV, MODEL_MOUNT,
};
pub use handle::{ContainerHandle, ContainerState, IllegalTransition, Mount};
pub use mock::{MockDriver, MockEvents};
pub use plan::*;

use crate::gateway::CONTAINER_PORT;
use crate::registry::RegistryEntry;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("driver unavailable: {0}")]
    DriverUnavailable(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("image missing: {0}")]
    ImageMissing(String),
    #[error("launch failed: {0}")]
    Launch(String),
    #[error("model not ready after {waited_ms} ms")]
    Timeout { waited_ms: u128 },
    #[error("model failed to start: {0}")]
    StartFailed(String),
    #[error(transparent)]
    InvalidState(#[from] IllegalTransition),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverKind {
    Process,
    Engine,
}

impl FromStr for DriverKind {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "process" => Ok(DriverKind::Process),
            "engine" | "docker" => Ok(DriverKind::Engine),
            other => Err(RuntimeError::DriverUnavailable(format!("unknown driver `{other}` (process, engine)"))),
        }
    }
}

impl DriverKind {
    pub fn connect(self) -> Result<Box<dyn Driver>, RuntimeError> {
        Ok(match self {
            DriverKind::Process => Box::new(ProcessDriver::locate()?),
            DriverKind::Engine => Box::new(EngineDriver::detect()?),
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct StartOptions {
    /// `None` picks a free ephemeral port.
    pub host_port: Option<u16>,
    pub data_mount: Option<PathBuf>,
}

/// A launched model. Dropping it stops the instance.
pub struct ModelInstance {
    handle: ContainerHandle,
    driver: Box<dyn Driver>,
    poll_interval: Duration,
}

pub fn start_model(entry: &RegistryEntry, opts: &StartOptions, mut driver: Box<dyn Driver>) -> Result<ModelInstance, RuntimeError> {
    let host_port = match opts.host_port {
        Some(p) => p,
        None => free_port().map_err(|e| RuntimeError::Launch(format!("no free port: {e}")))?,
    };
    driver.check_port(host_port)?;
    let template_dir = Path::new(&entry.source_repo);
    let template_dir = template_dir.is_dir().then(|| template_dir.to_path_buf());
    let mut mounts = Vec::new();
    if let Some(t) = &template_dir {
        mounts.push(Mount { host: t.clone(), container: MODEL_MOUNT.into(), read_only: true });
    }
    if let Some(d) = &opts.data_mount {
        if !d.is_dir() {
            return Err(RuntimeError::Launch(format!("data mount {} is not a directory", d.display())));
        }
        mounts.push(Mount { host: d.clone(), container: DATA_MOUNT.into(), read_only: true });
    }
    let spec = LaunchSpec {
        model: entry.name.clone(),
        template_dir,
        image: entry.image_refs.last().cloned(),
        host_port,
        mounts: mounts.clone(),
    };
    let id = driver.launch(&spec)?;
    let mut handle = ContainerHandle::new(id, driver.tag(), vec![(host_port, CONTAINER_PORT)], mounts);
    handle.transition(ContainerState::Starting)?;
    Ok(ModelInstance { handle, driver, poll_interval: Duration::from_millis(25) })
}

impl ModelInstance {
    pub fn handle(&self) -> &ContainerHandle {
        &self.handle
    }

    pub fn state(&self) -> ContainerState {
        self.handle.state()
    }

    pub fn host_port(&self) -> u16 {
        self.handle.host_port().expect("instances always map a port")
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}", self.host_port())
    }

    /// Probes once while starting and applies the outcome.
    pub fn poll(&mut self) -> Result<ContainerState, RuntimeError> {
        if self.state() == ContainerState::Starting {
            match self.driver.probe(&self.handle.id, self.host_port()) {
                Probe::Ready => self.handle.transition(ContainerState::Ready)?,
                Probe::Failed(msg) => {
                    self.handle.transition(ContainerState::Failed)?;
                    return Err(RuntimeError::StartFailed(msg));
                }
                Probe::Starting | Probe::Unreachable => {}
            }
        }
        Ok(self.state())
    }

    pub fn await_ready(&mut self, timeout: Duration) -> Result<(), RuntimeError> {
        let started = Instant::now();
        loop {
            match self.poll()? {
                ContainerState::Ready => return Ok(()),
                ContainerState::Starting => {}
                other => return Err(RuntimeError::StartFailed(format!("instance is {other}"))),
            }
            if started.elapsed() >= timeout {
                return Err(RuntimeError::Timeout { waited_ms: started.elapsed().as_millis() });
            }
            thread::sleep(self.poll_interval);
        }
    }

    /// Idempotent.
    pub fn stop(&mut self) -> Result<(), RuntimeError> {
        if self.state() == ContainerState::Stopped {
            return Ok(());
        }
        self.driver.terminate(&self.handle.id)?;
        self.handle.transition(ContainerState::Stopped)?;
        Ok(())
    }
}

impl Drop for ModelInstance {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{fixtures, parse_config};

    fn entry() -> RegistryEntry {
        RegistryEntry::new("m", "/nonexistent", parse_config(fixtures::VALID).unwrap())
    }

    #[test]
    fn ready_then_stop() {
        let (driver, events) = MockDriver::scripted(vec![Probe::Unreachable, Probe::Starting, Probe::Ready]);
        let mut inst = start_model(&entry(), &StartOptions::default(), Box::new(driver)).unwrap();
        assert_eq!(inst.state(), ContainerState::Starting);
        inst.poll_interval = Duration::ZERO;
        inst.await_ready(Duration::from_secs(5)).unwrap();
        inst.stop().unwrap();
        inst.stop().unwrap();
        assert_eq!(events.terminated(), 1);
    }

    #[test]
    fn failure_surfaces_stage() {
        let (driver, _) = MockDriver::scripted(vec![Probe::Failed("load_weights: missing".into())]);
        let mut inst = start_model(&entry(), &StartOptions::default(), Box::new(driver)).unwrap();
        let err = inst.await_ready(Duration::from_secs(1)).unwrap_err();
        assert_eq!(err, RuntimeError::StartFailed("load_weights: missing".into()));
        assert_eq!(inst.state(), ContainerState::Failed);
        inst.stop().unwrap();
        assert_eq!(inst.state(), ContainerState::Stopped);
    }

    #[test]
    fn timeout_keeps_starting() {
        let (driver, _) = MockDriver::scripted(vec![]);
        let mut inst = start_model(&entry(), &StartOptions::default(), Box::new(driver)).unwrap();
        inst.poll_interval = Duration::from_millis(1);
        assert!(matches!(inst.await_ready(Duration::from_millis(20)), Err(RuntimeError::Timeout { .. })));
        assert_eq!(inst.state(), ContainerState::Starting);
    }

    #[test]
    fn drop_terminates() {
        let (driver, events) = MockDriver::scripted(vec![Probe::Ready]);
        let inst = start_model(&entry(), &StartOptions::default(), Box::new(driver)).unwrap();
        drop(inst);
        assert_eq!(events.terminated(), 1);
    }

    #[test]
    fn port_clash_refused() {
        let held = std::net::TcpListener::bind("0.0.0.0:0").unwrap();
        let port = held.local_addr().unwrap().port();
        let (driver, events) = MockDriver::scripted(vec![]);
        let opts = StartOptions { host_port: Some(port), ..Default::default() };
        assert_eq!(start_model(&entry(), &opts, Box::new(driver)).err(), Some(RuntimeError::PortInUse(port)));
        assert_eq!(events.launched(), 0);
    }

    #[test]
    fn driver_kind_parse() {
        assert_eq!("process".parse::<DriverKind>().unwrap(), DriverKind::Process);
        assert!(matches!("k8s".parse::<DriverKind>(), Err(RuntimeError::DriverUnavailable(_))));
    }
}
