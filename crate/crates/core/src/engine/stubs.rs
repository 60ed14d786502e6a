//! Reference backends that exercise every output type without an ML framework.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::array::DataArray;
use super::backend::{BackendError, Hooks, ModelBackend};
use super::output::{Label, Output};
use crate::config::ModelConfig;

pub const IDENTITY_IMAGE: &str = "identity-image";
pub const CONSTANT_CLASSIFIER: &str = "constant-classifier";
pub const THRESHOLD_MASK: &str = "threshold-mask";
pub const MEAN_VECTOR: &str = "mean-vector";
pub const BOUNDING_CONTOUR: &str = "bounding-contour";
pub const FAULTY: &str = "faulty";

pub const BUILTIN_BACKENDS: [&str; 6] =
    [IDENTITY_IMAGE, CONSTANT_CLASSIFIER, THRESHOLD_MASK, MEAN_VECTOR, BOUNDING_CONTOUR, FAULTY];

/// Entry-point declaration stored in a template's `backend.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend: String,
    /// Weights file, relative to the template root.
    pub weights: String,
    #[serde(default)]
    pub hooks: Hooks,
    #[serde(default)]
    pub options: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("unknown backend `{0}`")]
    Unknown(String),
    #[error("invalid options for `{backend}`: {message}")]
    Options { backend: String, message: String },
}

pub fn is_builtin(name: &str) -> bool {
    BUILTIN_BACKENDS.contains(&name)
}

fn options<T: serde::de::DeserializeOwned + Default>(spec: &BackendSpec) -> Result<T, ResolveError> {
    if spec.options.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(spec.options.clone())
        .map_err(|e| ResolveError::Options { backend: spec.backend.clone(), message: e.to_string() })
}

/// Instantiates the backend named by `spec`.
pub fn resolve_backend(spec: &BackendSpec) -> Result<Box<dyn ModelBackend>, ResolveError> {
    let hooks = spec.hooks;
    let backend: Box<dyn ModelBackend> = match spec.backend.as_str() {
        IDENTITY_IMAGE => {
            let o: IdentityOptions = options(spec)?;
            Box::new(Stub::new(hooks, StubKind::Identity { custom: o.custom }))
        }
        CONSTANT_CLASSIFIER => {
            let o: ConstantOptions = options(spec)?;
            Box::new(Stub::new(hooks, StubKind::Constant(o.labels)))
        }
        THRESHOLD_MASK => {
            let o: ThresholdOptions = options(spec)?;
            Box::new(Stub::new(hooks, StubKind::Threshold(o.threshold)))
        }
        MEAN_VECTOR => Box::new(Stub::new(hooks, StubKind::MeanVector)),
        BOUNDING_CONTOUR => {
            let o: ThresholdOptions = options(spec)?;
            Box::new(Stub::new(hooks, StubKind::Contour(o.threshold)))
        }
        FAULTY => {
            let o: FaultyOptions = options(spec)?;
            Box::new(Faulty { fail_at: o.fail_at, hooks })
        }
        other => return Err(ResolveError::Unknown(other.to_string())),
    };
    Ok(backend)
}

#[derive(Debug, Default, Deserialize)]
struct IdentityOptions {
    /// Emit `custom` instead of `image`.
    #[serde(default)]
    custom: bool,
}

#[derive(Debug, Deserialize)]
struct ConstantOptions {
    labels: Vec<Label>,
}

impl Default for ConstantOptions {
    fn default() -> Self {
        Self { labels: vec![Label::new("cat", 1.0)] }
    }
}

#[derive(Debug, Deserialize)]
struct ThresholdOptions {
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn default_threshold() -> f64 {
    127.0
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { threshold: default_threshold() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailAt {
    Initialize,
    LoadWeights,
    #[default]
    Infer,
}

#[derive(Debug, Default, Deserialize)]
struct FaultyOptions {
    #[serde(default)]
    fail_at: FailAt,
}

#[derive(Debug, Clone)]
pub enum StubKind {
    Identity { custom: bool },
    Constant(Vec<Label>),
    Threshold(f64),
    MeanVector,
    Contour(f64),
}

/// A deterministic reference backend.
#[derive(Debug, Clone)]
pub struct Stub {
    kind: StubKind,
    hooks: Hooks,
    initialized: bool,
    weights_loaded: bool,
}

impl Stub {
    pub fn new(hooks: Hooks, kind: StubKind) -> Self {
        Self { kind, hooks, initialized: false, weights_loaded: false }
    }

    pub fn identity() -> Self {
        Self::new(Hooks::NONE, StubKind::Identity { custom: false })
    }

    pub fn constant(labels: Vec<Label>) -> Self {
        Self::new(Hooks::NONE, StubKind::Constant(labels))
    }

    pub fn threshold_mask() -> Self {
        Self::new(Hooks::NONE, StubKind::Threshold(default_threshold()))
    }

    pub fn mean_vector() -> Self {
        Self::new(Hooks::NONE, StubKind::MeanVector)
    }

    pub fn bounding_contour() -> Self {
        Self::new(Hooks::NONE, StubKind::Contour(default_threshold()))
    }

    pub fn with_hooks(mut self, hooks: Hooks) -> Self {
        self.hooks = hooks;
        self
    }

    /// Marks the stub as initialized with weights, for in-process use.
    pub fn ready(mut self) -> Self {
        self.initialized = true;
        self.weights_loaded = true;
        self
    }
}

/// `(height, width, channels)` view of an image-like array.
fn hwc(input: &DataArray) -> Result<(usize, usize, usize), BackendError> {
    match input.shape() {
        [h, w] => Ok((*h, *w, 1)),
        [h, w, c] => Ok((*h, *w, *c)),
        other => Err(BackendError::new(format!("expected a 2-D or 3-D image, got shape {other:?}"))),
    }
}

/// Binary mask: a pixel is set when its channel mean exceeds `threshold`.
pub fn threshold_mask(input: &DataArray, threshold: f64) -> Result<DataArray, BackendError> {
    let (h, w, c) = hwc(input)?;
    let mut mask = Vec::with_capacity(h * w);
    for p in 0..h * w {
        let sum: f64 = (0..c).map(|k| input.get_f64(p * c + k)).sum();
        mask.push(u8::from(sum / c as f64 > threshold));
    }
    DataArray::from_u8(vec![h, w], mask).map_err(|e| BackendError::new(e.to_string()))
}

impl ModelBackend for Stub {
    fn initialize(&mut self, _config: &ModelConfig) -> Result<(), BackendError> {
        self.initialized = true;
        Ok(())
    }

    fn load_weights(&mut self, locator: &Path) -> Result<(), BackendError> {
        if !self.initialized {
            return Err(BackendError::new("load_weights called before initialize"));
        }
        std::fs::metadata(locator)
            .map_err(|e| BackendError::new(format!("weights {}: {e}", locator.display())))?;
        self.weights_loaded = true;
        Ok(())
    }

    fn infer(&self, input: &DataArray) -> Result<Output, BackendError> {
        if !self.weights_loaded {
            return Err(BackendError::new("weights not loaded"));
        }
        match &self.kind {
            StubKind::Identity { custom: false } => Ok(Output::Image(input.clone())),
            StubKind::Identity { custom: true } => Ok(Output::Custom(input.clone())),
            StubKind::Constant(labels) => Ok(Output::LabelList(labels.clone())),
            StubKind::Threshold(t) => threshold_mask(input, *t).map(Output::MaskImage),
            StubKind::MeanVector => {
                let channels = if input.rank() >= 2 { *input.shape().last().unwrap() } else { 1 };
                let pixels = input.len() / channels;
                let means = (0..channels)
                    .map(|k| (0..pixels).map(|p| input.get_f64(p * channels + k)).sum::<f64>() / pixels as f64)
                    .collect();
                Ok(Output::Vector(means))
            }
            StubKind::Contour(t) => {
                let mask = threshold_mask(input, *t)?;
                let w = mask.shape()[1];
                let set: Vec<(usize, usize)> = mask
                    .as_u8()
                    .unwrap()
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v == 1)
                    .map(|(i, _)| (i / w, i % w))
                    .collect();
                if set.is_empty() {
                    return Ok(Output::Contour(Vec::new()));
                }
                let (r0, r1) = (set.iter().map(|p| p.0).min().unwrap(), set.iter().map(|p| p.0).max().unwrap());
                let (c0, c1) = (set.iter().map(|p| p.1).min().unwrap(), set.iter().map(|p| p.1).max().unwrap());
                let (x0, x1, y0, y1) = (c0 as f64, c1 as f64, r0 as f64, r1 as f64);
                Ok(Output::Contour(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]))
            }
        }
    }

    fn hooks(&self) -> Hooks {
        self.hooks
    }

    fn postprocess(&self, output: Output) -> Result<Output, BackendError> {
        match output {
            Output::LabelList(mut labels) => {
                labels.sort_by(|a, b| b.probability.total_cmp(&a.probability));
                Ok(Output::LabelList(labels))
            }
            other => Ok(other),
        }
    }
}

/// Backend that fails at a configured entry point.
#[derive(Debug, Clone)]
pub struct Faulty {
    pub fail_at: FailAt,
    pub hooks: Hooks,
}

impl ModelBackend for Faulty {
    fn initialize(&mut self, _config: &ModelConfig) -> Result<(), BackendError> {
        match self.fail_at {
            FailAt::Initialize => Err(BackendError::new("faulty backend: initialize failed")),
            _ => Ok(()),
        }
    }

    fn load_weights(&mut self, _locator: &Path) -> Result<(), BackendError> {
        match self.fail_at {
            FailAt::LoadWeights => Err(BackendError::new("faulty backend: load_weights failed")),
            _ => Ok(()),
        }
    }

    fn infer(&self, _input: &DataArray) -> Result<Output, BackendError> {
        Err(BackendError::new("faulty backend: infer failed"))
    }

    fn hooks(&self) -> Hooks {
        self.hooks
    }
}
