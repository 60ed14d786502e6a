//! Contribution checks: a static pass over the template directory, then an
//! integration pass against a live instance.

use std::fs;
use std::io::Cursor;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{config_digest, parse_config, validate_config, ModelConfig, CONFIG_FILE};
use crate::engine::stubs::{is_builtin, resolve_backend, BackendSpec};
use crate::engine::{format_from_locator, sniff_format};
use crate::gateway::{Envelope, ErrorBody};
use crate::registry::RegistryEntry;
use crate::runtime::{start_model, Driver, StartOptions};
use crate::template::{list_samples, read_backend_spec, ENV_RECIPE, LICENSE_FILE};
use crate::runtime::EnvManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Passed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl CheckResult {
    pub fn pass(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Passed, detail: detail.into() }
    }

    pub fn fail(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Failed, detail: detail.into() }
    }

    pub fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self { name: name.into(), status: CheckStatus::Skipped, detail: detail.into() }
    }

    fn check(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        if ok {
            Self::pass(name, detail)
        } else {
            Self::fail(name, detail)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub checks: Vec<CheckResult>,
}

impl ValidationOutcome {
    pub fn new(checks: Vec<CheckResult>) -> Self {
        Self { checks }
    }

    /// True when no check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Failed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed_names(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Failed).map(|c| c.name.as_str()).collect()
    }

    fn push(&mut self, c: CheckResult) {
        self.checks.push(c);
    }

    pub fn extend(&mut self, other: ValidationOutcome) {
        self.checks.extend(other.checks);
    }

    pub fn to_report(&self) -> Value {
        serde_json::json!({ "passed": self.passed(), "checks": self.checks })
    }

    /// One line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Passed => "ok  ",
                CheckStatus::Failed => "FAIL",
                CheckStatus::Skipped => "skip",
            };
            out.push_str(&format!("{tag} {}", c.name));
            if !c.detail.is_empty() {
                out.push_str(&format!(": {}", c.detail));
            }
            out.push('\n');
        }
        out
    }
}

/// Checks that need nothing but the directory contents.
pub fn check_template(dir: &Path) -> ValidationOutcome {
    let mut out = ValidationOutcome::default();

    let recipe = fs::read_to_string(dir.join(ENV_RECIPE));
    out.push(match &recipe {
        Err(_) => CheckResult::fail("env_recipe.present", format!("{ENV_RECIPE} not found")),
        Ok(text) => match EnvManifest::from_recipe(text) {
            Some(env) => CheckResult::pass("env_recipe.present", format!("base {}", env.base_image)),
            None => CheckResult::fail("env_recipe.present", format!("{ENV_RECIPE} has no FROM instruction")),
        },
    });

    let config: Option<ModelConfig> = match fs::read_to_string(dir.join(CONFIG_FILE)) {
        Err(e) => {
            out.push(CheckResult::fail("config.parse", format!("{CONFIG_FILE}: {e}")));
            None
        }
        Ok(text) => match parse_config(&text) {
            Err(e) => {
                out.push(CheckResult::fail("config.parse", e.to_string()));
                None
            }
            Ok(cfg) => {
                out.push(CheckResult::pass("config.parse", ""));
                Some(cfg)
            }
        },
    };

    match &config {
        None => out.push(CheckResult::skip("config.valid", "config did not parse")),
        Some(cfg) => {
            let report = validate_config(cfg);
            for v in &report.violations {
                out.push(CheckResult::fail(format!("config.{}", v.rule), v.path.clone()));
            }
            out.push(CheckResult::check("config.valid", report.is_valid(), format!("{} violation(s)", report.violations.len())));
        }
    }

    let license = fs::read_to_string(dir.join(LICENSE_FILE)).unwrap_or_default();
    out.push(CheckResult::check(
        "legal.model_license",
        !license.trim().is_empty(),
        if license.trim().is_empty() { format!("{LICENSE_FILE} missing or empty") } else { String::new() },
    ));

    let backend: Option<BackendSpec> = match read_backend_spec(dir) {
        Err(e) => {
            out.push(CheckResult::fail("backend.entry_points", e.to_string()));
            None
        }
        Ok(spec) if !is_builtin(&spec.backend) => {
            out.push(CheckResult::fail("backend.entry_points", format!("unknown backend `{}`", spec.backend)));
            None
        }
        Ok(spec) => match resolve_backend(&spec) {
            Err(e) => {
                out.push(CheckResult::fail("backend.entry_points", e.to_string()));
                None
            }
            Ok(_) => {
                out.push(CheckResult::pass("backend.entry_points", spec.backend.clone()));
                Some(spec)
            }
        },
    };

    out.push(match &backend {
        None => CheckResult::skip("model.weights", "no usable backend declaration"),
        Some(spec) => {
            let path = dir.join(&spec.weights);
            CheckResult::check("model.weights", !spec.weights.is_empty() && path.is_file(), spec.weights.clone())
        }
    });

    let samples = list_samples(dir);
    match &config {
        None => out.push(CheckResult::skip("legal.sample_data_license", "config did not parse")),
        Some(cfg) => {
            let has_license = cfg.legal.sample_data_license.as_deref().is_some_and(|s| !s.trim().is_empty());
            out.push(match (samples.is_empty(), has_license) {
                (false, false) => CheckResult::fail("legal.sample_data_license", "samples present without a sample data license"),
                (true, true) => CheckResult::fail("legal.sample_data_license", "sample data license declared without samples"),
                _ => CheckResult::pass("legal.sample_data_license", format!("{} sample(s)", samples.len())),
            });
            if !samples.is_empty() {
                let bad: Vec<String> = samples
                    .iter()
                    .filter(|p| {
                        let fmt = p.to_str().and_then(format_from_locator).or_else(|| fs::read(p).ok().and_then(|b| sniff_format(&b).map(str::to_string)));
                        !fmt.is_some_and(|f| cfg.io_spec.input_formats.iter().any(|a| *a == f))
                    })
                    .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                    .collect();
                out.push(CheckResult::check("samples.format", bad.is_empty(), bad.join(", ")));
            }
        }
    }
    out
}

fn http() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build().expect("http client builds")
}

/// A failed request; `code` is the gateway's error code when the body carried one.
#[derive(Debug)]
struct HttpFailure {
    message: String,
    code: Option<String>,
}

impl From<String> for HttpFailure {
    fn from(message: String) -> Self {
        Self { message, code: None }
    }
}

fn read_json(resp: reqwest::blocking::Response) -> Result<Value, HttpFailure> {
    let status = resp.status();
    let url = resp.url().path().to_string();
    let text = resp.text().map_err(|e| e.to_string())?;
    if !status.is_success() {
        let body = serde_json::from_str::<ErrorBody>(&text).ok();
        return Err(HttpFailure {
            message: format!("{url} returned {status}: {}", body.as_ref().map_or(text.as_str(), |b| b.message.as_str())),
            code: body.map(|b| b.error),
        });
    }
    serde_json::from_str(&text).map_err(|e| format!("{url}: body is not JSON: {e}").into())
}

fn get_json(client: &reqwest::blocking::Client, url: &str) -> Result<Value, String> {
    let resp = client.get(url).send().map_err(|e| e.to_string())?;
    read_json(resp).map_err(|f| f.message)
}

fn check_envelope(name: &str, body: Result<Value, HttpFailure>, declared: &str, out: &mut ValidationOutcome) {
    let decoded = body.and_then(|v| serde_json::from_value::<Envelope>(v).map_err(|e| format!("not an envelope: {e}").into()));
    match decoded {
        Err(f) => {
            if out.get("output_type.match").is_none() {
                out.push(match f.code.as_deref() {
                    Some("output_type_mismatch") => CheckResult::fail("output_type.match", f.message.clone()),
                    _ => CheckResult::skip("output_type.match", format!("{name} failed")),
                });
            }
            out.push(CheckResult::fail(name, f.message));
        }
        Ok(env) if !env.output.is_exclusive() => {
            out.push(CheckResult::fail(name, "envelope must carry exactly one of value or artifact_url"));
        }
        Ok(env) => {
            out.push(CheckResult::pass(name, ""));
            if out.get("output_type.match").is_none() {
                let got = env.output.output_type.as_str();
                out.push(CheckResult::check("output_type.match", got == declared, format!("declared {declared}, produced {got}")));
            }
        }
    }
}

/// Launches the template through `driver` and exercises every endpoint.
pub fn run_integration(dir: &Path, driver: Box<dyn Driver>, ready_timeout: Duration) -> ValidationOutcome {
    let mut out = ValidationOutcome::default();
    let cfg = match fs::read_to_string(dir.join(CONFIG_FILE)).ok().and_then(|t| parse_config(&t).ok()) {
        Some(c) => c,
        None => {
            out.push(CheckResult::skip("lifecycle.ready", "config did not parse"));
            return out;
        }
    };
    let declared = cfg.serving_output().map(|d| d.type_tag.clone()).unwrap_or_default();
    let source = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    let entry = RegistryEntry::new(cfg.id.clone(), source.display().to_string(), cfg.clone());
    let mut instance = match start_model(&entry, &StartOptions::default(), driver) {
        Ok(i) => i,
        Err(e) => {
            out.push(CheckResult::fail("lifecycle.ready", e.to_string()));
            return out;
        }
    };
    if let Err(e) = instance.await_ready(ready_timeout) {
        out.push(CheckResult::fail("lifecycle.ready", e.to_string()));
        let _ = instance.stop();
        return out;
    }
    out.push(CheckResult::pass("lifecycle.ready", format!("port {}", instance.host_port())));
    let base = instance.base_url();
    let client = http();

    match get_json(&client, &format!("{base}/api/get_config")) {
        Err(e) => {
            out.push(CheckResult::fail("endpoint.get_config", e));
            out.push(CheckResult::skip("get_config.reparse", "endpoint failed"));
        }
        Ok(v) => {
            out.push(CheckResult::pass("endpoint.get_config", ""));
            out.push(match parse_config(&v.to_string()) {
                Err(e) => CheckResult::fail("get_config.reparse", e.to_string()),
                Ok(served) => CheckResult::check(
                    "get_config.reparse",
                    config_digest(&served) == config_digest(&cfg),
                    "served config digest vs local",
                ),
            });
        }
    }

    out.push(match get_json(&client, &format!("{base}/api/get_legal")) {
        Err(e) => CheckResult::fail("endpoint.get_legal", e),
        Ok(v) => CheckResult::check(
            "endpoint.get_legal",
            v.get("model_license").and_then(Value::as_str) == Some(cfg.legal.model_license.as_str()),
            "model_license",
        ),
    });

    match client.get(format!("{base}/api/get_model_files")).send().and_then(|r| r.error_for_status()).and_then(|r| r.bytes()) {
        Err(e) => {
            out.push(CheckResult::fail("endpoint.get_model_files", e.to_string()));
            out.push(CheckResult::skip("get_model_files.contains_config", "endpoint failed"));
        }
        Ok(bytes) => {
            out.push(CheckResult::pass("endpoint.get_model_files", format!("{} bytes", bytes.len())));
            let has_config = zip::ZipArchive::new(Cursor::new(bytes.to_vec()))
                .map(|z| z.file_names().any(|n| n == CONFIG_FILE))
                .unwrap_or(false);
            out.push(CheckResult::check("get_model_files.contains_config", has_config, ""));
        }
    }

    let samples = list_samples(dir);
    out.push(match get_json(&client, &format!("{base}/api/get_samples")) {
        Err(e) => CheckResult::fail("endpoint.get_samples", e),
        Ok(v) => {
            let listed = v.as_array().map(Vec::len);
            let detail = match listed {
                Some(n) => format!("{n} listed, {} on disk", samples.len()),
                None => "body is not a list".to_string(),
            };
            CheckResult::check("endpoint.get_samples", listed == Some(samples.len()), detail)
        }
    });

    match samples.first() {
        None => {
            out.push(CheckResult::skip("endpoint.predict_sample", "template has no samples"));
            out.push(CheckResult::skip("output_type.match", "template has no samples"));
            out.push(CheckResult::skip("endpoint.predict", "template has no samples"));
        }
        Some(first) => {
            let body = client
                .get(format!("{base}/api/predict_sample?index=0"))
                .send()
                .map_err(|e| HttpFailure::from(e.to_string()))
                .and_then(read_json);
            check_envelope("endpoint.predict_sample", body, &declared, &mut out);
            let upload = fs::read(first).map_err(|e| HttpFailure::from(e.to_string())).and_then(|bytes| {
                let name = first.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                let form = reqwest::blocking::multipart::Form::new()
                    .part("file", reqwest::blocking::multipart::Part::bytes(bytes).file_name(name));
                let resp = client.post(format!("{base}/api/predict")).multipart(form).send().map_err(|e| e.to_string())?;
                read_json(resp)
            });
            check_envelope("endpoint.predict", upload, &declared, &mut out);
        }
    }

    out.push(match instance.stop() {
        Ok(()) => CheckResult::pass("lifecycle.stop", ""),
        Err(e) => CheckResult::fail("lifecycle.stop", e.to_string()),
    });
    out
}

/// Static checks, then integration when they pass and a driver is given.
pub fn validate(dir: &Path, driver: Option<Box<dyn Driver>>, ready_timeout: Duration) -> ValidationOutcome {
    let mut out = check_template(dir);
    match driver {
        None => out.push(CheckResult::skip("lifecycle.ready", "integration checks not requested")),
        Some(_) if !out.passed() => out.push(CheckResult::skip("lifecycle.ready", "static checks failed")),
        Some(d) => out.extend(run_integration(dir, d, ready_timeout)),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_everything() {
        let dir = tempfile::tempdir().unwrap();
        let out = check_template(dir.path());
        assert!(!out.passed());
        for name in ["env_recipe.present", "config.parse", "legal.model_license", "backend.entry_points"] {
            assert_eq!(out.get(name).unwrap().status, CheckStatus::Failed, "{name}");
        }
        assert_eq!(out.get("model.weights").unwrap().status, CheckStatus::Skipped);
    }

    #[test]
    fn skipped_checks_do_not_fail() {
        let out = ValidationOutcome::new(vec![CheckResult::pass("a", ""), CheckResult::skip("b", "")]);
        assert!(out.passed());
        assert!(out.render().contains("skip b"));
    }
}
