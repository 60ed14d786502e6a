//! On-disk model template: the contributor's directory of config, weights,
//! entry points, environment recipe, and optional samples.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use walkdir::WalkDir;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use crate::config::{parse_config, ConfigError, ModelConfig, CONFIG_FILE};
use crate::engine::stubs::BackendSpec;

pub const ENV_RECIPE: &str = "Dockerfile";
pub const LICENSE_FILE: &str = "LICENSE";
pub const BACKEND_FILE: &str = "backend.json";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template directory {0} does not exist")]
    Missing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid {CONFIG_FILE}: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid {BACKEND_FILE}: {0}")]
    Backend(String),
    #[error("cannot package template: {0}")]
    Package(String),
}

#[derive(Debug, Clone)]
pub struct Template {
    pub root: PathBuf,
    pub config: ModelConfig,
    pub backend: BackendSpec,
    /// Sample files, sorted by file name.
    pub samples: Vec<PathBuf>,
}

fn read(path: &Path) -> Result<String, TemplateError> {
    fs::read_to_string(path).map_err(|source| TemplateError::Io { path: path.to_path_buf(), source })
}

impl Template {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, TemplateError> {
        let root = root.into();
        if !root.is_dir() {
            return Err(TemplateError::Missing(root));
        }
        let config = parse_config(&read(&root.join(CONFIG_FILE))?)?;
        let backend = read_backend_spec(&root)?;
        let samples = list_samples(&root);
        Ok(Self { root, config, backend, samples })
    }

    pub fn weights_path(&self) -> PathBuf {
        self.root.join(&self.backend.weights)
    }

    pub fn sample_names(&self) -> Vec<String> {
        self.samples
            .iter()
            .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(str::to_string))
            .collect()
    }

    pub fn sample_path(&self, name: &str) -> Option<&Path> {
        self.samples.iter().map(PathBuf::as_path).find(|p| p.file_name().and_then(|n| n.to_str()) == Some(name))
    }
}

pub fn read_backend_spec(root: &Path) -> Result<BackendSpec, TemplateError> {
    serde_json::from_str(&read(&root.join(BACKEND_FILE))?).map_err(|e| TemplateError::Backend(e.to_string()))
}

pub fn list_samples(root: &Path) -> Vec<PathBuf> {
    let Ok(dir) = fs::read_dir(root.join(SAMPLES_DIR)) else {
        return Vec::new();
    };
    let mut samples: Vec<PathBuf> =
        dir.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_file()).collect();
    samples.sort();
    samples
}

/// Every regular file under `root`, as sorted `/`-separated relative paths.
pub fn list_files(root: &Path) -> Result<Vec<String>, TemplateError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        let entry = entry.map_err(|e| TemplateError::Package(e.to_string()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        files.push(parts.join("/"));
    }
    files.sort();
    Ok(files)
}

/// Zip of the template with sorted members and zeroed timestamps.
pub fn package_zip(root: &Path) -> Result<Vec<u8>, TemplateError> {
    let files = list_files(root)?;
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let pkg = |e: &dyn std::fmt::Display| TemplateError::Package(e.to_string());
    for rel in files {
        let bytes = fs::read(root.join(&rel)).map_err(|source| TemplateError::Io { path: root.join(&rel), source })?;
        zip.start_file(rel.as_str(), options).map_err(|e| pkg(&e))?;
        zip.write_all(&bytes).map_err(|e| pkg(&e))?;
    }
    Ok(zip.finish().map_err(|e| pkg(&e))?.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("model")).unwrap();
        fs::create_dir_all(dir.path().join("samples")).unwrap();
        fs::write(dir.path().join("config.json"), "{}").unwrap();
        fs::write(dir.path().join("model/weights.bin"), [1u8, 2, 3]).unwrap();
        fs::write(dir.path().join("samples/b.png"), b"b").unwrap();
        fs::write(dir.path().join("samples/a.png"), b"a").unwrap();
        dir
    }

    #[test]
    fn files_are_sorted_relative() {
        let dir = sample_tree();
        assert_eq!(
            list_files(dir.path()).unwrap(),
            vec!["config.json", "model/weights.bin", "samples/a.png", "samples/b.png"]
        );
        let names: Vec<_> = list_samples(dir.path()).iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, vec!["a.png", "b.png"]);
    }

    #[test]
    fn zip_is_deterministic() {
        let dir = sample_tree();
        let a = package_zip(dir.path()).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(20));
        fs::write(dir.path().join("samples/a.png"), b"a").unwrap();
        let b = package_zip(dir.path()).unwrap();
        assert_eq!(a, b);
        let archive = zip::ZipArchive::new(Cursor::new(a)).unwrap();
        let names: Vec<&str> = archive.file_names().collect();
        assert_eq!(names, vec!["config.json", "model/weights.bin", "samples/a.png", "samples/b.png"]);
    }

    #[test]
    fn missing_dir() {
        assert!(matches!(Template::open("/no/such/template"), Err(TemplateError::Missing(_))));
    }
}
