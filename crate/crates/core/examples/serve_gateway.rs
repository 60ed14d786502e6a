//! Serve a template in-process and call the classification endpoint.
//!
//! cargo run --example serve_gateway -- templates/stub-classifier

use std::time::Duration;

use hubforge::gateway::{GatewayOptions, RunningGateway};
use hubforge::template::Template;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/stub-classifier").into());
    let opts = GatewayOptions { artifact_dir: std::env::temp_dir().join("hubforge-gateway-example"), ..Default::default() };
    let gw = RunningGateway::spawn(Template::open(&dir).unwrap(), opts).unwrap();
    gw.wait_loaded(Duration::from_secs(10));
    let base = gw.base_url();
    println!("serving {dir} at {base}");
    for path in ["/health", "/api/get_legal", "/api/get_samples", "/api/predict_sample?index=0"] {
        let body = reqwest::blocking::get(format!("{base}{path}")).unwrap().text().unwrap();
        println!("GET {path}\n  {body}");
    }
}
