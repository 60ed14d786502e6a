//! Benchmark the constant classifier on a small generated dataset.

use std::time::Duration;

use hubforge::bench::{render_table, run_benchmark, BenchOptions, DatasetManifest, Metric};
use hubforge::gateway::{GatewayOptions, RunningGateway};
use hubforge::template::Template;

fn main() {
    let work = std::env::temp_dir().join("hubforge-bench-example");
    std::fs::create_dir_all(&work).unwrap();
    image::RgbImage::from_pixel(8, 8, image::Rgb([40, 80, 120])).save(work.join("x.png")).unwrap();
    let manifest = DatasetManifest::parse("# input\ttruth\nx.png\tcat\nx.png\tdog\nx.png\tfox\nx.png\towl\n", &work).unwrap();

    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/stub-classifier");
    let opts = GatewayOptions { artifact_dir: work.join("artifacts"), ..Default::default() };
    let gw = RunningGateway::spawn(Template::open(dir).unwrap(), opts).unwrap();
    gw.wait_loaded(Duration::from_secs(10));

    let report = run_benchmark(&gw.base_url(), &manifest, &BenchOptions { metric: Metric::TopK { k: 2 }, parallel: 2, ..Default::default() }).unwrap();
    print!("{}", render_table(&[report]));
}
