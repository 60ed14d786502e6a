//! Push one synthetic image through the inference pipeline with each stub.

use hubforge::config::parse_config;
use hubforge::engine::stubs::Stub;
use hubforge::engine::{run_pipeline, Hooks, InputChain, InputSource, ModelBackend};

fn png(w: u32, h: u32) -> Vec<u8> {
    let img = image::RgbImage::from_fn(w, h, |x, y| image::Rgb([(x * 16) as u8, (y * 16) as u8, 128]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn main() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/stub-identity/config.json")).unwrap();
    let mut cfg = parse_config(&text).unwrap();
    let chain = InputChain::standard();
    let stubs: [(&str, Box<dyn ModelBackend>); 4] = [
        ("image", Box::new(Stub::identity().with_hooks(Hooks::ALL).ready())),
        ("mask_image", Box::new(Stub::threshold_mask().ready())),
        ("vector", Box::new(Stub::mean_vector().ready())),
        ("contour", Box::new(Stub::bounding_contour().ready())),
    ];
    for (declared, backend) in stubs {
        cfg.io_spec.output_decls[0].type_tag = declared.into();
        let src = InputSource::Bytes { name: "probe.png", bytes: png(12, 9) };
        match run_pipeline(backend.as_ref(), &chain, src, &cfg) {
            Ok(o) => {
                let stages: Vec<&str> = o.stage_log.iter().map(|s| s.as_str()).collect();
                println!("{declared:<10} {:.2} ms  {}", o.processing_ms, stages.join(" > "));
            }
            Err(e) => println!("{declared:<10} failed: {e}"),
        }
    }
}
