use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerState {
    Created,
    Starting,
    Ready,
    Stopped,
    Failed,
}

impl ContainerState {
    pub const ALL: [ContainerState; 5] = [
        ContainerState::Created,
        ContainerState::Starting,
        ContainerState::Ready,
        ContainerState::Stopped,
        ContainerState::Failed,
    ];

    pub fn can_transition(self, to: ContainerState) -> bool {
        use ContainerState::*;
        matches!(
            (self, to),
            (Created, Starting) | (Starting, Ready) | (Starting, Failed) | (Starting, Stopped) | (Ready, Stopped) | (Failed, Stopped)
        )
    }
}

impl fmt::Display for ContainerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContainerState::Created => "created",
            ContainerState::Starting => "starting",
            ContainerState::Ready => "ready",
            ContainerState::Stopped => "stopped",
            ContainerState::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mount {
    pub host: PathBuf,
    pub container: String,
    pub read_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: ContainerState,
    pub to: ContainerState,
}

/// Lifecycle record of one model instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerHandle {
    pub id: String,
    state: ContainerState,
    /// `(host, container)` port pairs.
    pub port_map: Vec<(u16, u16)>,
    pub mounts: Vec<Mount>,
    pub driver: String,
    history: Vec<(ContainerState, ContainerState)>,
}

impl ContainerHandle {
    pub fn new(id: impl Into<String>, driver: impl Into<String>, port_map: Vec<(u16, u16)>, mounts: Vec<Mount>) -> Self {
        Self {
            id: id.into(),
            state: ContainerState::Created,
            port_map,
            mounts,
            driver: driver.into(),
            history: Vec::new(),
        }
    }

    pub fn state(&self) -> ContainerState {
        self.state
    }

    pub fn host_port(&self) -> Option<u16> {
        self.port_map.first().map(|p| p.0)
    }

    /// Every transition taken so far, in order.
    pub fn history(&self) -> &[(ContainerState, ContainerState)] {
        &self.history
    }

    pub fn transition(&mut self, to: ContainerState) -> Result<(), IllegalTransition> {
        if !self.state.can_transition(to) {
            return Err(IllegalTransition { from: self.state, to });
        }
        self.history.push((self.state, to));
        self.state = to;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::ContainerState::*;
    use super::*;

    #[test]
    fn table() {
        let legal = [(Created, Starting), (Starting, Ready), (Starting, Failed), (Starting, Stopped), (Ready, Stopped), (Failed, Stopped)];
        for from in ContainerState::ALL {
            for to in ContainerState::ALL {
                assert_eq!(from.can_transition(to), legal.contains(&(from, to)), "{from}->{to}");
            }
        }
    }

    #[test]
    fn illegal_transition_leaves_state() {
        let mut h = ContainerHandle::new("x", "mock", vec![], vec![]);
        assert!(h.transition(Ready).is_err());
        assert_eq!(h.state(), Created);
        h.transition(Starting).unwrap();
        h.transition(Failed).unwrap();
        assert!(h.transition(Ready).is_err());
        h.transition(Stopped).unwrap();
        assert_eq!(h.history(), &[(Created, Starting), (Starting, Failed), (Failed, Stopped)]);
    }
}
