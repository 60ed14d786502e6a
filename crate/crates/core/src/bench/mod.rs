//! Benchmarking against a serving gateway: manifests, per-item scoring,
//! and Table-style reports.

mod metrics;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use metrics::{dice, is_multilabel, macro_dice, rank_models, top_k_accuracy, MetricError, ModelRank};

use crate::artifact::decode;
use crate::engine::{DataArray, InputChain, Output};
use crate::gateway::{Envelope, Health, HealthStatus};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("cannot read manifest {path}: {message}")]
    ManifestIo { path: String, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("gateway is not ready: {0}")]
    NotReady(String),
    #[error("{failed} of {total} items failed; first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub input: String,
    /// Label string, or mask locator for Dice.
    pub truth: String,
}

/// Tab-separated `input<TAB>truth` records. Blank lines and `#` comments are
/// skipped; relative locators resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub items: Vec<ManifestItem>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, BenchError> {
        let mut items = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let Some((input, truth)) = line.split_once('\t') else {
                return Err(BenchError::Manifest { line: n + 1, message: "expected `input<TAB>truth`".into() });
            };
            let (input, truth) = (input.trim(), truth.trim());
            if input.is_empty() || truth.is_empty() || truth.contains('\t') {
                return Err(BenchError::Manifest { line: n + 1, message: "expected exactly two non-empty fields".into() });
            }
            items.push(ManifestItem { input: input.into(), truth: truth.into() });
        }
        if items.is_empty() {
            return Err(BenchError::Manifest { line: 0, message: "manifest has no items".into() });
        }
        Ok(Self { items, base_dir: base_dir.into() })
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BenchError::ManifestIo { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, locator: &str) -> PathBuf {
        let p = Path::new(locator);
        if p.is_absolute() { p.to_path_buf() } else { self.base_dir.join(p) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Metric {
    TopK { k: usize },
    Dice,
}

impl Metric {
    pub fn columns(&self) -> Vec<String> {
        match self {
            Metric::TopK { k: 1 } => vec!["top-1".into()],
            Metric::TopK { k } => vec!["top-1".into(), format!("top-{k}")],
            Metric::Dice => vec!["dice".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub input: String,
    /// One value per report column; empty when the item failed.
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub metric: Metric,
    pub columns: Vec<String>,
    pub per_item: Vec<ItemResult>,
    /// Column means over the items that succeeded.
    pub aggregate: Vec<f64>,
    pub failures: usize,
    pub wall_ms: f64,
}

/// Column means over successful items.
pub fn aggregate(per_item: &[ItemResult], columns: usize) -> Vec<f64> {
    let ok: Vec<&ItemResult> = per_item.iter().filter(|r| r.error.is_none()).collect();
    (0..columns)
        .map(|c| if ok.is_empty() { 0.0 } else { ok.iter().map(|r| r.values[c]).sum::<f64>() / ok.len() as f64 })
        .collect()
}

impl BenchReport {
    /// Value of the last column, the metric the run was asked for.
    pub fn primary(&self) -> f64 {
        *self.aggregate.last().expect("reports have at least one column")
    }

    pub fn column(&self, name: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == name).map(|i| self.aggregate[i])
    }

    pub fn is_consistent(&self) -> bool {
        aggregate(&self.per_item, self.columns.len()) == self.aggregate
    }

    pub fn render_table(&self) -> String {
        render_table(std::slice::from_ref(self))
    }
}

fn cell(metric: &Metric, v: f64) -> String {
    match metric {
        Metric::TopK { .. } => format!("{:.1}", v * 100.0),
        Metric::Dice => format!("{v:.4}"),
    }
}

/// Aligned table, one row per report. Accuracies are percentages.
pub fn render_table(reports: &[BenchReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let mut rows = vec![std::iter::once("model".to_string()).chain(first.columns.iter().cloned()).chain(["n".into()]).collect::<Vec<_>>()];
    for r in reports {
        let mut row = vec![r.model.clone()];
        row.extend(r.aggregate.iter().map(|&v| cell(&r.metric, v)));
        row.push(format!("{}", r.per_item.len() - r.failures));
        rows.push(row);
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, v)| if c == 0 { format!("{v:<w$}", w = widths[c]) } else { format!("{v:>w$}", w = widths[c]) })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub metric: Metric,
    pub parallel: usize,
    pub timeout: Duration,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { metric: Metric::TopK { k: 5 }, parallel: 1, timeout: Duration::from_secs(60) }
    }
}

const MASK_FORMATS: [&str; 3] = ["png", "jpeg", "raw-array"];

/// Reads a reference mask, dropping a trailing channel axis.
pub fn load_mask(path: &Path) -> Result<DataArray, String> {
    let chain = InputChain::standard();
    let allowed: Vec<String> = MASK_FORMATS.iter().map(|s| s.to_string()).collect();
    let input = chain.load_input(path.to_str().unwrap_or_default(), &allowed).map_err(|e| e.to_string())?;
    let arr = chain.convert(&input).map_err(|e| e.to_string())?;
    Ok(first_channel(arr))
}

fn first_channel(arr: DataArray) -> DataArray {
    if arr.rank() != 3 {
        return arr;
    }
    let (h, w, c) = (arr.shape()[0], arr.shape()[1], arr.shape()[2]);
    if c == 1 {
        return DataArray::new(vec![h, w], arr.data().clone()).expect("same element count");
    }
    let px: Vec<f64> = (0..h * w).map(|p| arr.get_f64(p * c)).collect();
    DataArray::from_f64(vec![h, w], px).expect("shape matches")
}

fn score_item(
    client: &reqwest::blocking::Client,
    endpoint: &str,
    manifest: &DatasetManifest,
    item: &ManifestItem,
    metric: Metric,
) -> Result<Vec<f64>, String> {
    let path = manifest.resolve(&item.input);
    let bytes = fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let form = reqwest::blocking::multipart::Form::new().part("file", reqwest::blocking::multipart::Part::bytes(bytes).file_name(name));
    let resp = client.post(format!("{endpoint}/api/predict")).multipart(form).send().map_err(|e| e.to_string())?;
    let status = resp.status();
    let body: Value = resp.json().map_err(|e| format!("response is not JSON: {e}"))?;
    if !status.is_success() {
        return Err(format!("{status}: {}", body.get("message").and_then(Value::as_str).unwrap_or_default()));
    }
    let env: Envelope = serde_json::from_value(body).map_err(|e| format!("not an envelope: {e}"))?;
    match metric {
        Metric::TopK { k } => {
            let labels = env.output.labels().ok_or("output is not a label list")?;
            let ranked = Output::LabelList(labels).ranked_labels().unwrap_or_default();
            let truth = [item.truth.clone()];
            let preds = [ranked];
            let mut values = vec![top_k_accuracy(&preds, &truth, 1).map_err(|e| e.to_string())?];
            if k != 1 {
                values.push(top_k_accuracy(&preds, &truth, k).map_err(|e| e.to_string())?);
            }
            Ok(values)
        }
        Metric::Dice => {
            let url = env.output.artifact_url.ok_or("output carries no artifact")?;
            let bytes = client
                .get(&url)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.bytes())
                .map_err(|e| format!("{url}: {e}"))?;
            let file = decode(&bytes).map_err(|e| e.to_string())?;
            let predicted = file.entry("output").ok_or("artifact has no `output` entry")?.array.clone();
            let truth = load_mask(&manifest.resolve(&item.truth))?;
            let value = if is_multilabel(&predicted) || is_multilabel(&truth) {
                macro_dice(&predicted, &truth)
            } else {
                dice(&predicted, &truth)
            };
            Ok(vec![value.map_err(|e| e.to_string())?])
        }
    }
}

/// Scores every manifest item against a ready gateway at `endpoint`.
pub fn run_benchmark(endpoint: &str, manifest: &DatasetManifest, opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    if let Metric::TopK { k: 0 } = opts.metric {
        return Err(MetricError::ZeroK.into());
    }
    let endpoint = endpoint.trim_end_matches('/');
    let started = Instant::now();
    let client = reqwest::blocking::Client::builder()
        .timeout(opts.timeout)
        .build()
        .map_err(|e| BenchError::Transport(e.to_string()))?;
    let health: Health = client
        .get(format!("{endpoint}/health"))
        .send()
        .and_then(|r| r.json())
        .map_err(|e| BenchError::Transport(e.to_string()))?;
    if health.status != HealthStatus::Ready {
        return Err(BenchError::NotReady(health.stage));
    }
    let config: Value = client
        .get(format!("{endpoint}/api/get_config"))
        .send()
        .and_then(|r| r.json())
        .map_err(|e| BenchError::Transport(e.to_string()))?;
    let model = config
        .pointer("/meta/name")
        .or_else(|| config.get("id"))
        .and_then(Value::as_str)
        .unwrap_or(endpoint)
        .to_string();

    let n = manifest.items.len();
    let slots: Mutex<Vec<Option<Result<Vec<f64>, String>>>> = Mutex::new(vec![None; n]);
    let next = AtomicUsize::new(0);
    let workers = opts.parallel.clamp(1, n);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = score_item(&client, endpoint, manifest, &manifest.items[i], opts.metric);
                slots.lock().expect("slots lock")[i] = Some(r);
            });
        }
    });

    let per_item: Vec<ItemResult> = slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .zip(&manifest.items)
        .map(|(r, item)| match r.expect("every slot filled") {
            Ok(values) => ItemResult { input: item.input.clone(), values, error: None },
            Err(e) => ItemResult { input: item.input.clone(), values: Vec::new(), error: Some(e) },
        })
        .collect();
    let failures = per_item.iter().filter(|r| r.error.is_some()).count();
    if failures * 2 > n {
        let first = per_item.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(BenchError::TooManyFailures { failed: failures, total: n, first });
    }
    let columns = opts.metric.columns();
    let aggregate = aggregate(&per_item, columns.len());
    Ok(BenchReport {
        model,
        metric: opts.metric,
        columns,
        per_item,
        aggregate,
        failures,
        wall_ms: started.elapsed().as_secs_f64() * 1000.0,
    })
}
