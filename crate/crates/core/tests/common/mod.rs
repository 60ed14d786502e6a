#![allow(dead_code)]

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use hubforge::runtime::ProcessDriver;
use serde_json::Value;

pub const STUBS: [&str; 5] = ["stub-classifier", "stub-contour", "stub-identity", "stub-mask", "stub-vector"];

pub fn templates_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../templates").canonicalize().expect("templates dir")
}

pub fn template(name: &str) -> PathBuf {
    templates_dir().join(name)
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_hubforge"))
}

pub fn process_driver(artifacts: &Path) -> Box<ProcessDriver> {
    Box::new(ProcessDriver::new(bin()).with_artifact_dir(artifacts))
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dest = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dest);
        } else {
            fs::copy(entry.path(), dest).unwrap();
        }
    }
}

/// A scratch copy of a shipped template.
pub struct Scratch {
    pub dir: tempfile::TempDir,
}

impl Scratch {
    pub fn of(name: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        copy_dir(&template(name), dir.path());
        Self { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    fn edit_json(&self, file: &str, f: impl FnOnce(&mut Value)) -> &Self {
        let path = self.path().join(file);
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        f(&mut v);
        fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
        self
    }

    pub fn edit_config(&self, f: impl FnOnce(&mut Value)) -> &Self {
        self.edit_json("config.json", f)
    }

    pub fn edit_backend(&self, f: impl FnOnce(&mut Value)) -> &Self {
        self.edit_json("backend.json", f)
    }

    pub fn remove(&self, rel: &str) -> &Self {
        let p = self.path().join(rel);
        if p.is_dir() {
            fs::remove_dir_all(p).unwrap();
        } else {
            fs::remove_file(p).unwrap();
        }
        self
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> &Self {
        let p = self.path().join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, bytes).unwrap();
        self
    }
}

pub fn png_rgb(w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Vec<u8> {
    let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y)));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

pub fn png_gray(w: u32, h: u32, f: impl Fn(u32, u32) -> u8) -> Vec<u8> {
    let img = image::GrayImage::from_fn(w, h, |x, y| image::Luma([f(x, y)]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

/// Broken templates paired with the check each must fail.
pub fn broken_corpus() -> Vec<(&'static str, Scratch, &'static str)> {
    let mut corpus = Vec::new();

    let s = Scratch::of("stub-classifier");
    s.remove("LICENSE");
    corpus.push(("missing license", s, "legal.model_license"));

    let s = Scratch::of("stub-classifier");
    s.write("config.json", b"{\"id\": \"broken\", \"meta\": ");
    corpus.push(("bad config", s, "config.parse"));

    let s = Scratch::of("stub-classifier");
    s.edit_config(|v| v["io_spec"]["output_decls"][0]["type"] = "mask_image".into());
    corpus.push(("output type mismatch", s, "output_type.match"));

    let s = Scratch::of("stub-classifier");
    s.edit_backend(|v| {
        v["backend"] = "faulty".into();
        v["options"] = serde_json::json!({ "fail_at": "load_weights" });
    });
    corpus.push(("crashing backend", s, "lifecycle.ready"));

    let s = Scratch::of("stub-classifier");
    s.remove("model/weights.bin");
    corpus.push(("missing weights", s, "model.weights"));

    let s = Scratch::of("stub-classifier");
    s.edit_config(|v| v["io_spec"]["dim_limits"][0][0] = serde_json::json!({ "min": 600, "max": 8 }));
    corpus.push(("inverted dim limits", s, "config.dim_limits.min_le_max"));

    let s = Scratch::of("stub-classifier");
    s.remove("Dockerfile");
    corpus.push(("absent env recipe", s, "env_recipe.present"));

    let s = Scratch::of("stub-classifier");
    s.edit_config(|v| {
        v["legal"].as_object_mut().unwrap().remove("sample_data_license");
    });
    corpus.push(("sample without license", s, "legal.sample_data_license"));

    let s = Scratch::of("stub-classifier");
    s.edit_backend(|v| v["backend"] = "tensorflow-graph".into());
    corpus.push(("unknown entry point", s, "backend.entry_points"));

    let s = Scratch::of("stub-classifier");
    s.edit_backend(|v| {
        v["backend"] = "faulty".into();
        v["options"] = serde_json::json!({ "fail_at": "infer" });
    });
    corpus.push(("backend crashing at inference", s, "endpoint.predict_sample"));

    corpus
}
