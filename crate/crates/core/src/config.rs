//! Contributor configuration manifest (`config.json`).
//!
//! Parsing is two-phase: the document is first read as a generic JSON value,
//! known top-level keys are then deserialized into typed blocks while every
//! unknown key is kept verbatim in [`ModelConfig::extensions`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::engine::OutputType;

/// File name of the manifest inside a model template.
pub const CONFIG_FILE: &str = "config.json";

const KNOWN_KEYS: [&str; 5] = ["id", "meta", "publication", "io_spec", "legal"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaBlock {
    pub name: String,
    pub task: String,
    pub application_area: String,
    pub data_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationBlock {
    pub title: String,
    pub authors: Vec<String>,
    pub source: String,
    pub year: i64,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
}

/// Inclusive bounds for one array axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisBound {
    pub min: u64,
    pub max: u64,
}

impl AxisBound {
    pub fn new(min: u64, max: u64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, size: usize) -> bool {
        let size = size as u64;
        self.min <= size && size <= self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDecl {
    pub name: String,
    /// Raw type tag; resolved against [`OutputType`] by [`OutputDecl::output_type`].
    #[serde(rename = "type")]
    pub type_tag: String,
    #[serde(default)]
    pub description: String,
}

impl OutputDecl {
    pub fn output_type(&self) -> Option<OutputType> {
        self.type_tag.parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoSpec {
    pub input_formats: Vec<String>,
    /// One list of axis bounds per accepted rank.
    #[serde(default)]
    pub dim_limits: Vec<Vec<AxisBound>>,
    pub output_decls: Vec<OutputDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegalBlock {
    pub model_license: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_data_license: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigCore {
    id: String,
    meta: MetaBlock,
    publication: PublicationBlock,
    io_spec: IoSpec,
    legal: LegalBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub id: String,
    pub meta: MetaBlock,
    pub publication: PublicationBlock,
    pub io_spec: IoSpec,
    pub legal: LegalBlock,
    /// Top-level keys this crate does not interpret, preserved as-is.
    pub extensions: BTreeMap<String, Value>,
}

impl ModelConfig {
    /// The output declaration a served model is held to (the first one).
    pub fn serving_output(&self) -> Option<&OutputDecl> {
        self.io_spec.output_decls.first()
    }

    pub fn to_value(&self) -> Value {
        let core = ConfigCore {
            id: self.id.clone(),
            meta: self.meta.clone(),
            publication: self.publication.clone(),
            io_spec: self.io_spec.clone(),
            legal: self.legal.clone(),
        };
        let mut value = serde_json::to_value(core).expect("config blocks always serialize");
        let map = value.as_object_mut().expect("config serializes as an object");
        for (k, v) in &self.extensions {
            map.insert(k.clone(), v.clone());
        }
        value
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("json value always serializes")
    }
}

impl Serialize for ModelConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModelConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        from_value(value).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("syntax error at {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("missing field `{0}`")]
    MissingField(String),
}

pub fn parse_config(document: &str) -> Result<ModelConfig, ConfigError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ConfigError::Syntax {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    from_value(value)
}

fn from_value(value: Value) -> Result<ModelConfig, ConfigError> {
    let Value::Object(map) = value else {
        return Err(ConfigError::Syntax {
            path: ".".into(),
            message: "config document must be an object".into(),
        });
    };
    let mut known = serde_json::Map::new();
    let mut extensions = BTreeMap::new();
    for (k, v) in map {
        if KNOWN_KEYS.contains(&k.as_str()) {
            known.insert(k, v);
        } else {
            extensions.insert(k, v);
        }
    }
    let core: ConfigCore =
        serde_path_to_error::deserialize(Value::Object(known)).map_err(classify_error)?;
    Ok(ModelConfig {
        id: core.id,
        meta: core.meta,
        publication: core.publication,
        io_spec: core.io_spec,
        legal: core.legal,
        extensions,
    })
}

fn classify_error(err: serde_path_to_error::Error<serde_json::Error>) -> ConfigError {
    let path = err.path().to_string();
    let message = err.inner().to_string();
    if let Some(rest) = message.strip_prefix("missing field `") {
        let field = rest.split('`').next().unwrap_or_default();
        let full = if path == "." || path.is_empty() {
            field.to_string()
        } else {
            format!("{path}.{field}")
        };
        return ConfigError::MissingField(full);
    }
    ConfigError::Syntax { path, message }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.rule, self.path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, path: impl Into<String>, rule: &str) {
        self.violations.push(Violation { path: path.into(), rule: rule.into() });
    }
}

pub fn validate_config(cfg: &ModelConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if cfg.id.trim().is_empty() {
        report.push("id", "id.non_empty");
    }
    if cfg.publication.year <= 0 {
        report.push("publication.year", "publication.year.positive");
    }
    if cfg.legal.model_license.trim().is_empty() {
        report.push("legal.model_license", "legal.model_license.non_empty");
    }
    let io = &cfg.io_spec;
    if io.input_formats.is_empty() {
        report.push("io_spec.input_formats", "input_formats.non_empty");
    }
    for (r, axes) in io.dim_limits.iter().enumerate() {
        if axes.is_empty() {
            report.push(format!("io_spec.dim_limits[{r}]"), "dim_limits.rank_positive");
        }
        for (a, bound) in axes.iter().enumerate() {
            let path = format!("io_spec.dim_limits[{r}][{a}]");
            if bound.min == 0 {
                report.push(path.clone(), "dim_limits.min_positive");
            }
            if bound.min > bound.max {
                report.push(path, "dim_limits.min_le_max");
            }
        }
    }
    if io.output_decls.is_empty() {
        report.push("io_spec.output_decls", "output_decls.non_empty");
    }
    for (i, decl) in io.output_decls.iter().enumerate() {
        if decl.output_type().is_none() {
            report.push(format!("io_spec.output_decls[{i}].type"), "output_type.unknown");
        }
    }
    report
}

/// Canonical bytes: object keys sorted, no insignificant whitespace, UTF-8.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&serde_json::to_string(scalar).expect("scalar serializes")),
    }
}

/// Lowercase hex SHA-256 over the canonical serialization.
pub fn config_digest(cfg: &ModelConfig) -> String {
    let bytes = canonical_json(&cfg.to_value());
    hex::encode(Sha256::digest(bytes.as_bytes()))
}

#[cfg(test)]
pub(crate) mod fixtures {
    pub const VALID: &str = r#"{
        "id": "stub-classifier",
        "meta": {
            "name": "Stub Classifier",
            "task": "classification",
            "application_area": "computer vision",
            "data_type": "image"
        },
        "publication": {
            "title": "A Constant Classifier",
            "authors": ["A. Author", "B. Author"],
            "source": "Journal of Stubs",
            "year": 2019,
            "url": "https://example.org/stub"
        },
        "io_spec": {
            "input_formats": ["png", "jpeg"],
            "dim_limits": [[{"min": 1, "max": 512}, {"min": 1, "max": 512}, {"min": 1, "max": 4}]],
            "output_decls": [{"name": "label", "type": "label_list", "description": "class probabilities"}]
        },
        "legal": {"model_license": "MIT"},
        "model_format": "stub"
    }"#;
}

#[cfg(test)]
mod tests {
    use super::fixtures::VALID;
    use super::*;

    fn edit(f: impl FnOnce(&mut Value)) -> String {
        let mut v: Value = serde_json::from_str(VALID).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn parses_fixture() {
        let cfg = parse_config(VALID).unwrap();
        assert_eq!(cfg.id, "stub-classifier");
        assert_eq!(cfg.publication.year, 2019);
        assert_eq!(cfg.extensions["model_format"], Value::from("stub"));
        assert_eq!(cfg.serving_output().unwrap().output_type(), Some(OutputType::LabelList));
    }

    #[test]
    fn missing_id_names_field() {
        let doc = edit(|v| {
            v.as_object_mut().unwrap().remove("id");
        });
        assert_eq!(parse_config(&doc), Err(ConfigError::MissingField("id".into())));
    }

    #[test]
    fn missing_nested_field_has_path() {
        let doc = edit(|v| {
            v["publication"].as_object_mut().unwrap().remove("title");
        });
        assert_eq!(
            parse_config(&doc),
            Err(ConfigError::MissingField("publication.title".into()))
        );
    }

    #[test]
    fn year_type_mismatch_is_syntax_error_at_path() {
        let doc = edit(|v| v["publication"]["year"] = Value::from("nineteen"));
        match parse_config(&doc) {
            Err(ConfigError::Syntax { path, .. }) => assert_eq!(path, "publication.year"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_document() {
        assert!(matches!(parse_config("{\"id\": "), Err(ConfigError::Syntax { .. })));
        assert!(matches!(parse_config("[1,2]"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn valid_fixture_has_empty_report() {
        let cfg = parse_config(VALID).unwrap();
        assert!(validate_config(&cfg).is_valid());
    }

    #[test]
    fn inverted_bound_is_flagged() {
        let doc = edit(|v| v["io_spec"]["dim_limits"][0][0] = serde_json::json!({"min": 512, "max": 64}));
        let report = validate_config(&parse_config(&doc).unwrap());
        assert!(report.has_rule("dim_limits.min_le_max"));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, "io_spec.dim_limits[0][0]");
    }

    #[test]
    fn unknown_output_type_is_flagged() {
        let doc = edit(|v| v["io_spec"]["output_decls"][0]["type"] = Value::from("hologram"));
        let report = validate_config(&parse_config(&doc).unwrap());
        assert_eq!(report.violations.len(), 1);
        assert!(report.has_rule("output_type.unknown"));
    }

    #[test]
    fn other_rules() {
        let doc = edit(|v| {
            v["id"] = Value::from("");
            v["publication"]["year"] = Value::from(0);
            v["legal"]["model_license"] = Value::from(" ");
            v["io_spec"]["input_formats"] = serde_json::json!([]);
            v["io_spec"]["output_decls"] = serde_json::json!([]);
        });
        let report = validate_config(&parse_config(&doc).unwrap());
        for rule in [
            "id.non_empty",
            "publication.year.positive",
            "legal.model_license.non_empty",
            "input_formats.non_empty",
            "output_decls.non_empty",
        ] {
            assert!(report.has_rule(rule), "{rule}");
        }
    }

    #[test]
    fn digest_is_deterministic_and_content_sensitive() {
        let a = config_digest(&parse_config(VALID).unwrap());
        let b = config_digest(&parse_config(VALID).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let renamed = edit(|v| v["meta"]["name"] = Value::from("Other"));
        assert_ne!(a, config_digest(&parse_config(&renamed).unwrap()));
    }

    #[test]
    fn round_trip_through_serialization() {
        let cfg = parse_config(VALID).unwrap();
        assert_eq!(parse_config(&cfg.to_json_pretty()).unwrap(), cfg);
    }
}
