//! The inference cycle: loaders, converters, backend hooks, and dispatch.

mod array;
mod backend;
mod loader;
mod output;
mod pipeline;
pub mod stubs;

pub use array::{ArrayData, ArrayError, DType, DataArray};
pub use backend::{BackendError, Hooks, ModelBackend};
pub use loader::{
    detect_format, format_from_locator, sniff_format, Converter, InputChain, Loader, NativeInput,
    PassthroughLoader, RasterConverter, RawArrayConverter, FORMAT_JPEG, FORMAT_PNG, FORMAT_RAW_ARRAY,
};
pub use output::{Label, Output, OutputType};
pub use pipeline::{check_dims, run_pipeline, DimViolation, InferenceOutcome, InputSource, Stage};

#[cfg(test)]
#[allow(unused_imports)]
pub(crate) use loader::test_images;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("unsupported format `{format}`; accepted: {}", allowed.join(", "))]
    UnsupportedFormat { format: String, allowed: Vec<String> },
    #[error("cannot read {locator}: {message}")]
    Read { locator: String, message: String },
    #[error("conversion failed: {0}")]
    Conversion(String),
    #[error("dimension check failed at {loc}: {0}", loc = .0.location())]
    DimViolation(#[from] DimViolation),
    #[error("backend failed during {stage}: {message}")]
    Backend { stage: Stage, message: String },
    #[error("declared output type `{declared}` but backend produced `{produced}`")]
    OutputTypeMismatch { stage: Stage, declared: String, produced: OutputType },
    #[error("invalid output: {message}")]
    InvalidOutput { stage: Stage, message: String },
    #[error("loader `{0}` is already registered with the same claims")]
    DuplicateExactClaim(String),
    #[error("loader `{0}` claims no formats")]
    NoClaims(String),
}

impl EngineError {
    pub(crate) fn backend(stage: Stage, err: BackendError) -> Self {
        EngineError::Backend { stage, message: err.0 }
    }

    /// The pipeline stage the failure belongs to.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            EngineError::UnsupportedFormat { .. } | EngineError::Read { .. } => Some(Stage::Load),
            EngineError::Conversion(_) => Some(Stage::Convert),
            EngineError::DimViolation(_) => Some(Stage::CheckDims),
            EngineError::Backend { stage, .. }
            | EngineError::OutputTypeMismatch { stage, .. }
            | EngineError::InvalidOutput { stage, .. } => Some(*stage),
            EngineError::DuplicateExactClaim(_) | EngineError::NoClaims(_) => None,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnsupportedFormat { .. } => "unsupported_format",
            EngineError::Read { .. } => "read_error",
            EngineError::Conversion(_) => "conversion_error",
            EngineError::DimViolation(_) => "dim_violation",
            EngineError::Backend { .. } => "backend_error",
            EngineError::OutputTypeMismatch { .. } => "output_type_mismatch",
            EngineError::InvalidOutput { .. } => "invalid_output",
            EngineError::DuplicateExactClaim(_) => "duplicate_claim",
            EngineError::NoClaims(_) => "no_claims",
        }
    }
}
