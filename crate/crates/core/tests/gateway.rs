mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{png_rgb, Scratch};
use hubforge::artifact::decode;
use hubforge::engine::stubs::threshold_mask;
use hubforge::engine::{DataArray, DType};
use hubforge::gateway::{router, Envelope, ErrorBody, FetchPolicy, GatewayOptions, GatewayState, HealthStatus, RunningGateway};
use hubforge::template::Template;
use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::Client;
use serde_json::Value;
use tower::ServiceExt;

fn options(artifacts: &std::path::Path) -> GatewayOptions {
    GatewayOptions { artifact_dir: artifacts.to_path_buf(), ..Default::default() }
}

struct Live {
    gw: RunningGateway,
    _artifacts: tempfile::TempDir,
    client: Client,
}

impl Live {
    fn start(dir: &std::path::Path, tweak: impl FnOnce(&mut GatewayOptions)) -> Self {
        let artifacts = tempfile::tempdir().unwrap();
        let mut opts = options(artifacts.path());
        tweak(&mut opts);
        let gw = RunningGateway::spawn(Template::open(dir).unwrap(), opts).unwrap();
        gw.wait_loaded(Duration::from_secs(10));
        Self { gw, _artifacts: artifacts, client: Client::new() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.gw.base_url())
    }

    fn get(&self, path: &str) -> reqwest::blocking::Response {
        self.client.get(self.url(path)).send().unwrap()
    }

    fn upload(&self, name: &str, bytes: Vec<u8>) -> reqwest::blocking::Response {
        let form = Form::new().part("file", Part::bytes(bytes).file_name(name.to_string()));
        self.client.post(self.url("/api/predict")).multipart(form).send().unwrap()
    }
}

fn error_of(resp: reqwest::blocking::Response) -> (StatusCode, ErrorBody) {
    let status = StatusCode::from_u16(resp.status().as_u16()).unwrap();
    (status, resp.json().unwrap())
}

#[tokio::test]
async fn endpoints_refuse_before_load() {
    let tpl = Template::open(common::template("stub-classifier")).unwrap();
    let artifacts = tempfile::tempdir().unwrap();
    let app = router(GatewayState::new(tpl, options(artifacts.path())));
    for path in ["/api/get_config", "/api/get_legal", "/api/get_samples", "/api/predict_sample"] {
        let resp = app.clone().oneshot(Request::get(path).body(Body::empty()).unwrap()).await.unwrap();
        assert_eq!(resp.status(), StatusCode::SERVICE_UNAVAILABLE, "{path}");
    }
    let resp = app.oneshot(Request::get("/health").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[test]
fn classifier_contract() {
    let live = Live::start(&common::template("stub-classifier"), |_| {});
    let health: Value = live.get("/health").json().unwrap();
    assert_eq!(health["status"], "ready");

    let cfg: Value = live.get("/api/get_config").json().unwrap();
    assert_eq!(cfg["id"], "stub-classifier");
    assert_eq!(cfg["model_format"], "stub");

    let legal: Value = live.get("/api/get_legal").json().unwrap();
    assert_eq!(legal, serde_json::json!({ "model_license": "MIT", "sample_data_license": "CC0-1.0" }));

    let samples: Vec<String> = live.get("/api/get_samples").json().unwrap();
    assert_eq!(samples.len(), 2);
    assert!(samples[0].ends_with("/samples/gradient.png"), "{samples:?}");
    let bytes = live.client.get(&samples[0]).send().unwrap().bytes().unwrap();
    assert_eq!(&bytes[1..4], b"PNG");

    let env: Envelope = live.get("/api/predict_sample?index=1").json().unwrap();
    assert!(env.output.is_exclusive());
    let labels = env.output.labels().unwrap();
    assert_eq!(labels.iter().map(|l| l.label.as_str()).collect::<Vec<_>>(), vec!["cat", "dog", "fox"]);
    assert!(chrono::DateTime::parse_from_rfc3339(&env.timestamp).is_ok());

    let zip = live.get("/api/get_model_files");
    assert_eq!(zip.headers()["content-type"], "application/zip");
    let archive = zip::ZipArchive::new(std::io::Cursor::new(zip.bytes().unwrap().to_vec())).unwrap();
    let names: Vec<&str> = archive.file_names().collect();
    assert!(names.contains(&"config.json") && names.contains(&"model/weights.bin"), "{names:?}");
}

#[test]
fn sample_index_errors() {
    let live = Live::start(&common::template("stub-classifier"), |_| {});
    let (status, body) = error_of(live.get("/api/predict_sample?index=7"));
    assert_eq!((status, body.error.as_str()), (StatusCode::NOT_FOUND, "no_such_sample"));
    let (status, body) = error_of(live.get("/api/predict_sample?index=-1"));
    assert_eq!((status, body.error.as_str()), (StatusCode::BAD_REQUEST, "bad_input"));
    assert_eq!(live.get("/samples/nope.png").status(), 404);
}

#[test]
fn legal_omits_sample_license_without_samples() {
    let s = Scratch::of("stub-classifier");
    s.remove("samples");
    let live = Live::start(s.path(), |_| {});
    let legal: Value = live.get("/api/get_legal").json().unwrap();
    assert_eq!(legal, serde_json::json!({ "model_license": "MIT" }));
    let samples: Vec<String> = live.get("/api/get_samples").json().unwrap();
    assert!(samples.is_empty());
}

#[test]
fn upload_errors() {
    let live = Live::start(&common::template("stub-classifier"), |o| o.upload_cap = 4096);

    let (status, body) = error_of(live.upload("notes.txt", b"hello".to_vec()));
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);
    assert_eq!(body.details.unwrap()["accepted_formats"], serde_json::json!(["png", "jpeg"]));

    let (status, body) = error_of(live.upload("big.png", vec![0u8; 10_000]));
    assert_eq!((status, body.error.as_str()), (StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large"));

    let form = Form::new()
        .part("a", Part::bytes(png_rgb(2, 2, |_, _| [0, 0, 0])).file_name("a.png"))
        .part("b", Part::bytes(png_rgb(2, 2, |_, _| [0, 0, 0])).file_name("b.png"));
    let (status, _) = error_of(live.client.post(live.url("/api/predict")).multipart(form).send().unwrap());
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = error_of(live.upload("corrupt.png", b"\x89PNG\r\n\x1a\nbroken".to_vec()));
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body.details.unwrap()["stage"], "convert");

    assert_eq!(live.upload("ok.png", png_rgb(3, 3, |_, _| [1, 2, 3])).status(), 200);
}

#[test]
fn dimension_violation_is_422() {
    let s = Scratch::of("stub-classifier");
    s.edit_config(|v| v["io_spec"]["dim_limits"] = serde_json::json!([[{"min": 1, "max": 8}, {"min": 1, "max": 8}, {"min": 3, "max": 3}]]));
    let live = Live::start(s.path(), |_| {});
    let (status, body) = error_of(live.upload("wide.png", png_rgb(9, 4, |_, _| [0, 0, 0])));
    assert_eq!((status, body.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "dim_violation"));
    assert!(body.message.contains("axis 1"), "{}", body.message);
    assert_eq!(live.upload("fits.png", png_rgb(8, 8, |_, _| [0, 0, 0])).status(), 200);
}

#[test]
fn mask_is_served_as_artifact() {
    let live = Live::start(&common::template("stub-mask"), |_| {});
    let input = png_rgb(12, 7, |x, y| if (x + y) % 3 == 0 { [250, 250, 250] } else { [5, 5, 5] });
    let env: Envelope = live.upload("in.png", input.clone()).json().unwrap();
    assert!(env.output.value.is_none());
    let url = env.output.artifact_url.clone().unwrap();
    assert!(url.starts_with(&live.gw.base_url()) && url.ends_with(".mhaf"), "{url}");
    let bytes = live.client.get(&url).send().unwrap().bytes().unwrap();
    assert_eq!(hubforge::artifact::digest_bytes(&bytes), env.output.file_digest.unwrap());
    let file = decode(&bytes).unwrap();
    let entry = file.entry("output").unwrap();
    assert_eq!(entry.attributes["output_type"], "mask_image");
    assert_eq!(entry.array.dtype(), DType::U8);

    let rgb = image::load_from_memory(&input).unwrap().to_rgb8();
    let arr = DataArray::from_u8(vec![7, 12, 3], rgb.into_raw()).unwrap();
    assert!(entry.array.bit_eq(&threshold_mask(&arr, 127.0).unwrap()));
}

#[test]
fn inline_outputs_for_vector_and_contour() {
    let live = Live::start(&common::template("stub-vector"), |_| {});
    let env: Envelope = live.upload("in.png", png_rgb(4, 4, |_, _| [10, 20, 30])).json().unwrap();
    assert_eq!(env.output.value.unwrap(), serde_json::json!([10.0, 20.0, 30.0]));

    let live = Live::start(&common::template("stub-contour"), |_| {});
    let env: Envelope = live
        .upload("in.png", png_rgb(6, 5, |x, y| if (1..4).contains(&x) && (2..4).contains(&y) { [255; 3] } else { [0; 3] }))
        .json()
        .unwrap();
    assert_eq!(env.output.value.unwrap(), serde_json::json!([[1.0, 2.0], [3.0, 2.0], [3.0, 3.0], [1.0, 3.0]]));
}

#[test]
fn fetch_policy() {
    let live = Live::start(&common::template("stub-classifier"), |_| {});
    let own = live.url("/samples/square.png");
    let (status, body) = error_of(live.get(&format!("/api/predict?fileurl={own}")));
    assert_eq!((status, body.error.as_str()), (StatusCode::FORBIDDEN, "fetch_denied"));
    let (status, _) = error_of(live.get("/api/predict?fileurl=ftp://example.org/x.png"));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = error_of(live.get("/api/predict"));
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let allowed = Live::start(&common::template("stub-classifier"), |o| {
        o.fetch_policy = FetchPolicy::new(&["127.0.0.1".to_string()]).unwrap();
    });
    let own = allowed.url("/samples/square.png");
    let resp = allowed.get(&format!("/api/predict?fileurl={own}"));
    assert_eq!(resp.status(), 200);
    let env: Envelope = resp.json().unwrap();
    assert_eq!(env.output.labels().unwrap()[0].label, "cat");
    let (status, body) = error_of(allowed.get(&format!("/api/predict?fileurl={}", allowed.url("/samples/missing.png"))));
    assert_eq!((status, body.error.as_str()), (StatusCode::BAD_GATEWAY, "fetch_failed"));
}

#[test]
fn failing_backend_reports_stage() {
    let s = Scratch::of("stub-classifier");
    s.edit_backend(|v| {
        v["backend"] = "faulty".into();
        v["options"] = serde_json::json!({ "fail_at": "load_weights" });
    });
    let live = Live::start(s.path(), |_| {});
    let health = live.gw.state.health();
    assert_eq!(health.status, HealthStatus::Failed);
    assert!(health.stage.starts_with("load_weights"), "{}", health.stage);
    assert_eq!(live.get("/api/get_config").status(), 503);
}

#[test]
fn output_type_mismatch_is_422() {
    let s = Scratch::of("stub-classifier");
    s.edit_config(|v| v["io_spec"]["output_decls"][0]["type"] = "vector".into());
    let live = Live::start(s.path(), |_| {});
    let (status, body) = error_of(live.get("/api/predict_sample"));
    assert_eq!((status, body.error.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "output_type_mismatch"));
}
