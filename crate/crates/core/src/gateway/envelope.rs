use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::ArtifactRef;
use crate::engine::{Label, Output, OutputType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub id: String,
    pub name: String,
}

/// Output block: either an inline `value` or an `artifact_url`, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOutput {
    #[serde(rename = "type")]
    pub output_type: OutputType,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_digest: Option<String>,
}

impl EnvelopeOutput {
    pub fn is_exclusive(&self) -> bool {
        self.value.is_some() != self.artifact_url.is_some()
    }

    /// Label list decoded from an inline value.
    pub fn labels(&self) -> Option<Vec<Label>> {
        if self.output_type != OutputType::LabelList {
            return None;
        }
        serde_json::from_value(self.value.clone()?).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub model: ModelRef,
    pub output: EnvelopeOutput,
    pub processing_ms: f64,
    /// ISO-8601, UTC.
    pub timestamp: String,
}

/// Inline JSON form of an envelope-representable output.
pub fn inline_value(output: &Output) -> Option<Value> {
    match output {
        Output::LabelList(labels) => Some(serde_json::to_value(labels).expect("labels serialize")),
        Output::Vector(v) => Some(serde_json::to_value(v).expect("vector serializes")),
        Output::Contour(points) => Some(serde_json::to_value(points).expect("contour serializes")),
        Output::MaskImage(_) | Output::Image(_) | Output::Custom(_) => None,
    }
}

pub(crate) fn artifact_output(output_type: OutputType, name: String, base: &str, r: ArtifactRef) -> EnvelopeOutput {
    EnvelopeOutput {
        output_type,
        name,
        value: None,
        artifact_url: Some(format!("{base}{}", r.url)),
        file_digest: Some(r.file_digest),
    }
}

/// Uniform error body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}
