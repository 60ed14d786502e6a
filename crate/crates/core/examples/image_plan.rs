//! Show the layered image plan for a template.

use hubforge::config::parse_config;
use hubforge::runtime::{plan_images, EnvManifest, PlanOptions};
use hubforge::template::list_files;

fn main() {
    let dir = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/stub-mask").into()));
    let cfg = parse_config(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    let env = EnvManifest::from_recipe(&std::fs::read_to_string(dir.join("Dockerfile")).unwrap()).expect("recipe has FROM");
    let opts = PlanOptions { registry: Some("registry.example.org/hub".into()), deployment_files: Some(list_files(&dir).unwrap()) };
    let plan = plan_images(&cfg, &env, &opts);
    plan.check().unwrap();
    for layer in &plan.layers {
        println!("{:<11} {:<50} <- {}", layer.kind.as_str(), layer.name, layer.parent.as_deref().unwrap_or("-"));
    }
    println!("run image: {}", plan.run_image());
}
