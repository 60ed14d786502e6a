use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::array::DataArray;
use super::backend::ModelBackend;
use super::loader::InputChain;
use super::output::{Output, OutputType};
use super::EngineError;
use crate::config::{AxisBound, ModelConfig};

/// One step of the inference cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    PreprocessNative,
    Convert,
    PreprocessArray,
    CheckDims,
    Infer,
    Postprocess,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::PreprocessNative => "preprocess_native",
            Stage::Convert => "convert",
            Stage::PreprocessArray => "preprocess_array",
            Stage::CheckDims => "check_dims",
            Stage::Infer => "infer",
            Stage::Postprocess => "postprocess",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutcome {
    pub output: Output,
    pub model_id: String,
    /// Wall time of the infer stage.
    pub processing_ms: f64,
    pub stage_log: Vec<Stage>,
}

impl InferenceOutcome {
    pub fn output_type(&self) -> OutputType {
        self.output.output_type()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DimViolation {
    #[error("rank {actual} not among accepted ranks {accepted:?}")]
    Rank { actual: usize, accepted: Vec<usize> },
    #[error("axis {axis} has size {size}, outside [{min}, {max}]")]
    Axis { axis: usize, size: usize, min: u64, max: u64 },
}

impl DimViolation {
    /// `"rank"` or `"axis <k>"`.
    pub fn location(&self) -> String {
        match self {
            DimViolation::Rank { .. } => "rank".into(),
            DimViolation::Axis { axis, .. } => format!("axis {axis}"),
        }
    }
}

/// Accepts when some same-rank bound list contains every axis. No limits accept anything.
pub fn check_dims(arr: &DataArray, limits: &[Vec<AxisBound>]) -> Result<(), DimViolation> {
    if limits.is_empty() {
        return Ok(());
    }
    let shape = arr.shape();
    let mut first_breach = None;
    for bounds in limits.iter().filter(|b| b.len() == shape.len()) {
        match shape.iter().zip(bounds).position(|(&size, b)| !b.contains(size)) {
            None => return Ok(()),
            Some(axis) => {
                first_breach.get_or_insert(DimViolation::Axis {
                    axis,
                    size: shape[axis],
                    min: bounds[axis].min,
                    max: bounds[axis].max,
                });
            }
        }
    }
    Err(first_breach.unwrap_or_else(|| DimViolation::Rank {
        actual: shape.len(),
        accepted: limits.iter().map(Vec::len).collect(),
    }))
}

/// Where the pipeline reads its input from.
#[derive(Debug, Clone)]
pub enum InputSource<'a> {
    Locator(&'a str),
    Bytes { name: &'a str, bytes: Vec<u8> },
}

/// One inference cycle: load, convert, hooks, dimension gate, infer.
pub fn run_pipeline(
    backend: &dyn ModelBackend,
    chain: &InputChain,
    source: InputSource<'_>,
    cfg: &ModelConfig,
) -> Result<InferenceOutcome, EngineError> {
    let hooks = backend.hooks();
    let allowed = &cfg.io_spec.input_formats;
    let mut log = Vec::with_capacity(7);

    let mut native = match source {
        InputSource::Locator(locator) => chain.load_input(locator, allowed)?,
        InputSource::Bytes { name, bytes } => chain.load_bytes(bytes, name, allowed)?,
    };
    log.push(Stage::Load);

    if hooks.preprocess_native {
        native = backend
            .preprocess_native(native)
            .map_err(|e| EngineError::backend(Stage::PreprocessNative, e))?;
        log.push(Stage::PreprocessNative);
    }

    let mut array = chain.convert(&native)?;
    log.push(Stage::Convert);

    if hooks.preprocess_array {
        array = backend
            .preprocess_array(array)
            .map_err(|e| EngineError::backend(Stage::PreprocessArray, e))?;
        log.push(Stage::PreprocessArray);
    }

    check_dims(&array, &cfg.io_spec.dim_limits)?;
    log.push(Stage::CheckDims);

    let started = Instant::now();
    let mut output = backend.infer(&array).map_err(|e| EngineError::backend(Stage::Infer, e))?;
    let processing_ms = started.elapsed().as_secs_f64() * 1000.0;
    log.push(Stage::Infer);

    if hooks.postprocess {
        output = backend
            .postprocess(output)
            .map_err(|e| EngineError::backend(Stage::Postprocess, e))?;
        log.push(Stage::Postprocess);
    }

    let last = *log.last().expect("stages ran");
    let declared = cfg.serving_output().map(|d| d.type_tag.clone()).unwrap_or_default();
    if declared != output.output_type().as_str() {
        return Err(EngineError::OutputTypeMismatch {
            stage: last,
            declared,
            produced: output.output_type(),
        });
    }
    output.check().map_err(|message| EngineError::InvalidOutput { stage: last, message })?;

    Ok(InferenceOutcome { output, model_id: cfg.id.clone(), processing_ms, stage_log: log })
}
