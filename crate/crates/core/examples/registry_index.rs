//! Build a registry index from the bundled templates and query it.

use hubforge::config::parse_config;
use hubforge::registry::{ModelFilter, RegistryEntry, RegistryIndex};
use hubforge::validator::check_template;

fn main() {
    let root = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates"));
    let mut index = RegistryIndex::default();
    for dir in ["stub-classifier", "stub-mask", "stub-vector"].map(|n| root.join(n)) {
        let cfg = parse_config(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
        // Static checks only; `hubforge add` also runs the live ones.
        let gate = check_template(&dir);
        index.add_entry(RegistryEntry::new(cfg.id.clone(), dir.display().to_string(), cfg), Some(&gate)).unwrap();
    }
    for m in index.list_models(&ModelFilter { task: Some("segmentation".into()), ..Default::default() }) {
        println!("segmentation: {}", m.name);
    }
    match index.get_entry("stub-clasifier") {
        Ok(e) => println!("found {}", e.name),
        Err(e) => println!("{e}; nearest: {:?}", index.nearest_names("stub-clasifier", 3)),
    }
}
