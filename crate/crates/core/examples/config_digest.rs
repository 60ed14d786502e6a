//! Parse a model config, list its rule violations, print its digest.
//!
//! cargo run --example config_digest -- templates/stub-mask/config.json

use hubforge::config::{config_digest, parse_config, validate_config};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/stub-classifier/config.json").into());
    let text = std::fs::read_to_string(&path).expect("readable config");
    let cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{path}: {e}");
            std::process::exit(1);
        }
    };
    let report = validate_config(&cfg);
    for v in &report.violations {
        println!("violation  {v}");
    }
    println!("{} ({})  valid={}  digest={}", cfg.meta.name, cfg.id, report.is_valid(), config_digest(&cfg));
}
