use std::path::Path;

use serde::{Deserialize, Serialize};

use super::array::DataArray;
use super::loader::NativeInput;
use super::output::Output;
use crate::config::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

impl BackendError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Which optional processing hooks a backend supplies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hooks {
    #[serde(default)]
    pub preprocess_native: bool,
    #[serde(default)]
    pub preprocess_array: bool,
    #[serde(default)]
    pub postprocess: bool,
}

impl Hooks {
    pub const NONE: Hooks = Hooks { preprocess_native: false, preprocess_array: false, postprocess: false };
    pub const ALL: Hooks = Hooks { preprocess_native: true, preprocess_array: true, postprocess: true };
}

/// Contract every model implementation fulfils.
///
/// `initialize` and `load_weights` run once before serving. The optional
/// hooks are only invoked when [`ModelBackend::hooks`] advertises them.
pub trait ModelBackend: Send {
    fn initialize(&mut self, config: &ModelConfig) -> Result<(), BackendError>;

    fn load_weights(&mut self, locator: &Path) -> Result<(), BackendError>;

    fn infer(&self, input: &DataArray) -> Result<Output, BackendError>;

    fn hooks(&self) -> Hooks {
        Hooks::NONE
    }

    fn preprocess_native(&self, input: NativeInput) -> Result<NativeInput, BackendError> {
        Ok(input)
    }

    fn preprocess_array(&self, input: DataArray) -> Result<DataArray, BackendError> {
        Ok(input)
    }

    fn postprocess(&self, output: Output) -> Result<Output, BackendError> {
        Ok(output)
    }
}
