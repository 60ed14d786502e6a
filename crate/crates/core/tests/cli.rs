mod common;

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use hubforge::registry::{load_index, ModelFilter};

fn hubforge(registry: &Path, args: &[&str]) -> Output {
    Command::new(common::bin())
        .arg("--registry")
        .arg(registry)
        .args(args)
        .env_remove("HUBFORGE_REGISTRY")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Registry {
    dir: tempfile::TempDir,
}

impl Registry {
    fn empty() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self) -> std::path::PathBuf {
        self.dir.path().join("registry.json")
    }

    fn with(names: &[&str]) -> Self {
        let r = Self::empty();
        for n in names {
            let out = hubforge(&r.path(), &["add", common::template(n).to_str().unwrap()]);
            assert_eq!(code(&out), 0, "add {n}: {}{}", stdout(&out), stderr(&out));
        }
        r
    }
}

#[test]
fn list_empty_and_filtered() {
    let r = Registry::empty();
    let out = hubforge(&r.path(), &["list"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 1);
    assert!(stdout(&out).starts_with("NAME"));

    let r = Registry::with(&["stub-classifier", "stub-mask", "stub-vector"]);
    let out = hubforge(&r.path(), &["list", "--task", "SEGMENT"]);
    let rows: Vec<String> = stdout(&out).lines().skip(1).map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    let oracle: Vec<String> = load_index(&r.path())
        .unwrap()
        .list_models(&ModelFilter { task: Some("SEGMENT".into()), ..Default::default() })
        .into_iter()
        .map(|m| m.name)
        .collect();
    assert_eq!(rows, oracle);
    assert_eq!(rows, vec!["stub-mask"]);
    assert_eq!(stdout(&hubforge(&r.path(), &["list"])).lines().count(), 4);
}

#[test]
fn add_rejects_duplicates_and_broken_templates() {
    let r = Registry::with(&["stub-classifier"]);
    let out = hubforge(&r.path(), &["add", common::template("stub-classifier").to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));

    let s = common::Scratch::of("stub-vector");
    s.remove("LICENSE");
    let out = hubforge(&r.path(), &["add", s.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert_eq!(load_index(&r.path()).unwrap().entries.len(), 1);

    let entry = &load_index(&r.path()).unwrap().entries["stub-classifier"];
    assert_eq!(entry.image_refs.len(), 3);
    assert_eq!(entry.image_refs[2], "hubforge/stub-classifier:hub_env");
}

#[test]
fn info_variants() {
    let r = Registry::with(&["stub-classifier"]);
    let out = hubforge(&r.path(), &["info", "stub-classifier"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("Stub Classifier: a reference backend for gateway tests (2024)"), "{text}");

    let raw = hubforge(&r.path(), &["info", "stub-classifier", "--raw"]);
    let doc: serde_json::Value = serde_json::from_slice(&raw.stdout).unwrap();
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(common::template("stub-classifier").join("config.json")).unwrap()).unwrap();
    assert_eq!(doc, on_disk);

    let out = hubforge(&r.path(), &["info", "stub-clasifier"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("did you mean: stub-classifier"), "{}", stderr(&out));
}

#[test]
fn io_errors_and_usage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "[1, 2").unwrap();
    let out = hubforge(&bad, &["list"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("corrupt registry index"), "{}", stderr(&out));

    let out = hubforge(&bad, &["list", "--no-such-flag"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));
    for sub in ["list", "info", "run", "validate", "add", "benchmark", "plan", "registry", "serve"] {
        let out = hubforge(&bad, &[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub} --help");
    }
    assert!(!dir.path().join("registry.json").exists());
}

#[test]
fn validate_exit_codes() {
    let r = Registry::empty();
    let ok = hubforge(&r.path(), &["validate", common::template("stub-identity").to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));

    let s = common::Scratch::of("stub-identity");
    s.remove("Dockerfile");
    let out = hubforge(&r.path(), &["validate", s.path().to_str().unwrap(), "--report"]);
    assert_eq!(code(&out), 1);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], false);

    let file = r.dir.path().join("report.json");
    let out = hubforge(&r.path(), &["validate", s.path().to_str().unwrap(), "--report", file.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(std::fs::read_to_string(&file).unwrap().contains("env_recipe.present"));

    let out = hubforge(&r.path(), &["validate", "/nonexistent/dir"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn run_serves_until_interrupted() {
    let r = Registry::with(&["stub-classifier"]);
    let port = hubforge::runtime::free_port().unwrap();
    let mut child = Command::new(common::bin())
        .args(["--registry", r.path().to_str().unwrap(), "run", "stub-classifier", "-p", &port.to_string(), "--driver", "process"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    assert_eq!(line.trim(), format!("http://localhost:{port}"));
    let health: serde_json::Value =
        reqwest::blocking::get(format!("http://127.0.0.1:{port}/health")).unwrap().json().unwrap();
    assert_eq!(health["status"], "ready");

    // SIGINT, as from a terminal
    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    std::thread::sleep(Duration::from_millis(100));
    assert!(reqwest::blocking::get(format!("http://127.0.0.1:{port}/health")).is_err());
}

#[test]
fn run_errors() {
    let r = Registry::with(&["stub-classifier"]);
    let out = hubforge(&r.path(), &["run", "stub-clasifier"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("stub-classifier"));

    let held = std::net::TcpListener::bind("0.0.0.0:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let out = hubforge(&r.path(), &["run", "stub-classifier", "-p", &port]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn benchmark_command() {
    let r = Registry::with(&["stub-classifier"]);
    let data = tempfile::tempdir().unwrap();
    std::fs::write(data.path().join("a.png"), common::png_rgb(3, 3, |_, _| [0; 3])).unwrap();
    std::fs::write(data.path().join("m.tsv"), "a.png\tcat\na.png\tdog\n").unwrap();
    let report = data.path().join("report.json");
    let out = hubforge(
        &r.path(),
        &["benchmark", "stub-classifier", "--manifest", data.path().join("m.tsv").to_str().unwrap(), "--metric", "topk", "-k", "2", "--report", report.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = stdout(&out);
    assert!(table.lines().next().unwrap().contains("top-1  top-2"), "{table}");
    assert!(table.contains("50.0") && table.contains("100.0"), "{table}");
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(doc["aggregate"], serde_json::json!([0.5, 1.0]));

    let out = hubforge(&r.path(), &["benchmark", "stub-classifier", "--manifest", "/nonexistent.tsv"]);
    assert_eq!(code(&out), 2);
    let port = hubforge::runtime::free_port().unwrap();
    let out = hubforge(&r.path(), &["benchmark", &format!("http://127.0.0.1:{port}"), "--manifest", data.path().join("m.tsv").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn registry_facade() {
    let r = Registry::with(&["stub-classifier", "stub-mask"]);
    let port = hubforge::runtime::free_port().unwrap();
    let mut child = Command::new(common::bin())
        .args(["--registry", r.path().to_str().unwrap(), "registry", "serve", "-p", &port.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = format!("http://127.0.0.1:{port}");
    let list: serde_json::Value = reqwest::blocking::get(format!("{base}/registry/models")).unwrap().json().unwrap();
    let oracle = serde_json::to_value(load_index(&r.path()).unwrap().list_models(&ModelFilter::default())).unwrap();
    assert_eq!(list, oracle);
    let filtered: serde_json::Value =
        reqwest::blocking::get(format!("{base}/registry/models?task=segmentation")).unwrap().json().unwrap();
    assert_eq!(filtered.as_array().unwrap().len(), 1);
    let one: serde_json::Value = reqwest::blocking::get(format!("{base}/registry/models/stub-mask")).unwrap().json().unwrap();
    assert_eq!(one["config"]["id"], "stub-mask");
    let missing = reqwest::blocking::get(format!("{base}/registry/models/stub-mas")).unwrap();
    assert_eq!(missing.status(), 404);
    let body: serde_json::Value = missing.json().unwrap();
    assert_eq!(body["details"]["nearest"][0], "stub-mask");
    child.kill().unwrap();
    let _ = child.wait();
}

#[test]
fn plan_command() {
    let r = Registry::empty();
    let out = hubforge(&r.path(), &["plan", common::template("stub-mask").to_str().unwrap(), "--deployment"]);
    assert_eq!(code(&out), 0);
    let kinds: Vec<String> = stdout(&out).lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    assert_eq!(kinds, vec!["base_os", "model_env", "hub_env", "deployment"]);
}
