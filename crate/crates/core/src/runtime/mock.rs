use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use super::driver::{Driver, LaunchSpec, Probe};
use super::RuntimeError;

#[derive(Debug, Default)]
struct Counters {
    launched: usize,
    terminated: usize,
    probes: usize,
}

/// Shared view of what a [`MockDriver`] was asked to do.
#[derive(Debug, Clone, Default)]
pub struct MockEvents(Arc<Mutex<Counters>>);

impl MockEvents {
    pub fn launched(&self) -> usize {
        self.0.lock().unwrap().launched
    }

    pub fn terminated(&self) -> usize {
        self.0.lock().unwrap().terminated
    }

    pub fn probes(&self) -> usize {
        self.0.lock().unwrap().probes
    }
}

/// In-memory driver answering probes from a script; `Starting` once it runs out.
/// Every port counts as free unless listed as taken.
pub struct MockDriver {
    script: VecDeque<Probe>,
    taken_ports: Vec<u16>,
    launch_error: Option<RuntimeError>,
    events: MockEvents,
}

impl MockDriver {
    pub fn scripted(script: Vec<Probe>) -> (Self, MockEvents) {
        let events = MockEvents::default();
        let driver = Self { script: script.into(), taken_ports: Vec::new(), launch_error: None, events: events.clone() };
        (driver, events)
    }

    pub fn with_taken_port(mut self, port: u16) -> Self {
        self.taken_ports.push(port);
        self
    }

    pub fn failing_launch(mut self, err: RuntimeError) -> Self {
        self.launch_error = Some(err);
        self
    }
}

impl Driver for MockDriver {
    fn tag(&self) -> &str {
        "mock"
    }

    fn check_port(&self, port: u16) -> Result<(), RuntimeError> {
        if self.taken_ports.contains(&port) {
            return Err(RuntimeError::PortInUse(port));
        }
        super::port_available(port)
    }

    fn launch(&mut self, spec: &LaunchSpec) -> Result<String, RuntimeError> {
        if let Some(e) = self.launch_error.clone() {
            return Err(e);
        }
        let mut c = self.events.0.lock().unwrap();
        c.launched += 1;
        Ok(format!("mock-{}-{}", spec.model, c.launched))
    }

    fn probe(&mut self, _id: &str, _host_port: u16) -> Probe {
        self.events.0.lock().unwrap().probes += 1;
        self.script.pop_front().unwrap_or(Probe::Starting)
    }

    fn terminate(&mut self, _id: &str) -> Result<(), RuntimeError> {
        self.events.0.lock().unwrap().terminated += 1;
        Ok(())
    }
}
