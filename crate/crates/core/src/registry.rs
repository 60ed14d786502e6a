//! Persistent index of contributed models.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{config_digest, MetaBlock, ModelConfig};
use crate::validator::ValidationOutcome;

/// Environment variable naming the default index path.
pub const REGISTRY_ENV: &str = "HUBFORGE_REGISTRY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub name: String,
    /// Locator of the model's own repository (a template directory for local use).
    pub source_repo: String,
    pub config_digest: String,
    pub image_refs: Vec<String>,
    pub added_at: DateTime<Utc>,
    #[serde(default)]
    pub sample_locators: Vec<String>,
    pub config: ModelConfig,
}

impl RegistryEntry {
    pub fn new(name: impl Into<String>, source_repo: impl Into<String>, config: ModelConfig) -> Self {
        Self {
            name: name.into(),
            source_repo: source_repo.into(),
            config_digest: config_digest(&config),
            image_refs: Vec::new(),
            added_at: Utc::now(),
            sample_locators: Vec::new(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryIndex {
    pub version: u64,
    pub entries: BTreeMap<String, RegistryEntry>,
}

impl Default for RegistryIndex {
    fn default() -> Self {
        Self { version: 1, entries: BTreeMap::new() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("corrupt registry index {path}: {message}")]
    CorruptIndex { path: String, message: String },
    #[error("cannot write registry index {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("a model named `{0}` is already registered")]
    DuplicateName(String),
    #[error("model `{0}` has not passed the contribution gate")]
    GateNotPassed(String),
    #[error("no model named `{0}`")]
    NotFound(String),
}

/// Conjunctive, case-insensitive substring filter over meta fields.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFilter {
    pub task: Option<String>,
    pub application_area: Option<String>,
    pub data_type: Option<String>,
}

impl ModelFilter {
    pub fn matches(&self, meta: &MetaBlock) -> bool {
        fn hit(needle: &Option<String>, hay: &str) -> bool {
            needle.as_ref().is_none_or(|n| hay.to_lowercase().contains(&n.to_lowercase()))
        }
        hit(&self.task, &meta.task)
            && hit(&self.application_area, &meta.application_area)
            && hit(&self.data_type, &meta.data_type)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub meta: MetaBlock,
}

pub fn load_index(path: &Path) -> Result<RegistryIndex, RegistryError> {
    let corrupt = |message: String| RegistryError::CorruptIndex { path: path.display().to_string(), message };
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(RegistryIndex::default()),
        Err(e) => return Err(corrupt(e.to_string())),
    };
    let index: RegistryIndex = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    for (key, entry) in &index.entries {
        if key != &entry.name {
            return Err(corrupt(format!("key `{key}` holds entry named `{}`", entry.name)));
        }
        if config_digest(&entry.config) != entry.config_digest {
            return Err(corrupt(format!("config digest mismatch for `{key}`")));
        }
    }
    Ok(index)
}

pub fn save_index(index: &RegistryIndex, path: &Path) -> Result<(), RegistryError> {
    let io = |source| RegistryError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let body = serde_json::to_vec_pretty(index).expect("index serializes");
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    fs::write(&tmp, body).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

impl RegistryIndex {
    /// Inserts an entry that has passed the contribution gate.
    pub fn add_entry(
        &mut self,
        mut entry: RegistryEntry,
        validation: Option<&ValidationOutcome>,
    ) -> Result<(), RegistryError> {
        if !validation.is_some_and(ValidationOutcome::passed) {
            return Err(RegistryError::GateNotPassed(entry.name));
        }
        if self.entries.contains_key(&entry.name) {
            return Err(RegistryError::DuplicateName(entry.name));
        }
        entry.config_digest = config_digest(&entry.config);
        self.entries.insert(entry.name.clone(), entry);
        self.version += 1;
        Ok(())
    }

    /// Sorted by name.
    pub fn list_models(&self, filter: &ModelFilter) -> Vec<ModelSummary> {
        self.entries
            .values()
            .filter(|e| filter.matches(&e.config.meta))
            .map(|e| ModelSummary { name: e.name.clone(), meta: e.config.meta.clone() })
            .collect()
    }

    /// Exact, case-sensitive lookup.
    pub fn get_entry(&self, name: &str) -> Result<&RegistryEntry, RegistryError> {
        self.entries.get(name).ok_or_else(|| RegistryError::NotFound(name.to_string()))
    }

    /// Registered names closest to `name` by edit distance, best first.
    pub fn nearest_names(&self, name: &str, limit: usize) -> Vec<String> {
        let mut scored: Vec<(usize, &String)> = self
            .entries
            .keys()
            .map(|k| (strsim::levenshtein(&k.to_lowercase(), &name.to_lowercase()), k))
            .collect();
        scored.sort();
        scored.into_iter().take(limit).map(|(_, k)| k.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{fixtures, parse_config};
    use crate::validator::{CheckResult, ValidationOutcome};

    fn entry(name: &str, task: &str) -> RegistryEntry {
        let mut cfg = parse_config(fixtures::VALID).unwrap();
        cfg.id = name.into();
        cfg.meta.task = task.into();
        RegistryEntry::new(name, format!("https://example.org/{name}"), cfg)
    }

    fn passed() -> ValidationOutcome {
        ValidationOutcome::new(vec![CheckResult::pass("config.parse", "")])
    }

    fn failed() -> ValidationOutcome {
        ValidationOutcome::new(vec![CheckResult::fail("config.parse", "broken")])
    }

    #[test]
    fn absent_file_is_empty_v1() {
        let dir = tempfile::tempdir().unwrap();
        let index = load_index(&dir.path().join("none.json")).unwrap();
        assert_eq!(index.version, 1);
        assert!(index.entries.is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/index.json");
        let mut index = RegistryIndex::default();
        index.add_entry(entry("b", "segmentation"), Some(&passed())).unwrap();
        index.add_entry(entry("a", "classification"), Some(&passed())).unwrap();
        save_index(&index, &path).unwrap();
        assert_eq!(load_index(&path).unwrap(), index);
    }

    #[test]
    fn garbage_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        fs::write(&path, [0xff, 0x00, 0x13]).unwrap();
        assert!(matches!(load_index(&path), Err(RegistryError::CorruptIndex { .. })));
    }

    #[test]
    fn tampered_digest_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let mut index = RegistryIndex::default();
        index.add_entry(entry("a", "t"), Some(&passed())).unwrap();
        index.entries.get_mut("a").unwrap().config_digest = "00".into();
        save_index(&index, &path).unwrap();
        assert!(matches!(load_index(&path), Err(RegistryError::CorruptIndex { .. })));
    }

    #[test]
    fn gate_and_duplicates() {
        let mut index = RegistryIndex::default();
        index.add_entry(entry("a", "t"), Some(&passed())).unwrap();
        assert_eq!(index.version, 2);
        assert!(matches!(index.add_entry(entry("a", "t"), Some(&passed())), Err(RegistryError::DuplicateName(_))));
        let before = index.clone();
        assert!(matches!(index.add_entry(entry("b", "t"), Some(&failed())), Err(RegistryError::GateNotPassed(_))));
        assert!(matches!(index.add_entry(entry("b", "t"), None), Err(RegistryError::GateNotPassed(_))));
        assert_eq!(index, before);
        assert_eq!(index.list_models(&ModelFilter::default()).len(), 1);
    }

    #[test]
    fn listing_and_filtering() {
        let mut index = RegistryIndex::default();
        assert!(index.list_models(&ModelFilter::default()).is_empty());
        for (n, t) in [("zeta", "classification"), ("alpha", "Brain Segmentation"), ("mid", "detection")] {
            index.add_entry(entry(n, t), Some(&passed())).unwrap();
        }
        let names: Vec<_> = index.list_models(&ModelFilter::default()).into_iter().map(|s| s.name).collect();
        assert_eq!(names, vec!["alpha", "mid", "zeta"]);
        let filter = ModelFilter { task: Some("segmentation".into()), ..Default::default() };
        let hits = index.list_models(&filter);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].name, "alpha");
    }

    #[test]
    fn lookup_is_case_sensitive() {
        let mut index = RegistryIndex::default();
        index.add_entry(entry("Stub", "t"), Some(&passed())).unwrap();
        assert!(index.get_entry("Stub").is_ok());
        assert!(matches!(index.get_entry("stub"), Err(RegistryError::NotFound(_))));
        assert!(matches!(index.get_entry("nope"), Err(RegistryError::NotFound(_))));
        assert_eq!(index.nearest_names("stub", 1), vec!["Stub"]);
    }
}
