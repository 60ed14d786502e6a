//! Write a two-entry artifact file to a directory and read it back.

use hubforge::artifact::{read_artifact, ArtifactEntry, ArtifactFile, ArtifactStore};
use hubforge::engine::{ArrayData, DataArray};

fn main() {
    let dir = std::env::temp_dir().join("hubforge-artifact-example");
    let store = ArtifactStore::new(&dir);
    let mask = DataArray::new(vec![2, 3], ArrayData::U8(vec![0, 1, 1, 0, 0, 1])).unwrap();
    let embedding = DataArray::new(vec![4], ArrayData::F32(vec![0.5, -1.25, f32::NAN, 3.0])).unwrap();
    let file = ArtifactFile {
        entries: vec![
            ArtifactEntry::new("output", mask).with_attr("output_type", "mask_image"),
            ArtifactEntry::new("embedding", embedding).with_attr("units", "arbitrary"),
        ],
    };
    let r = store.write_file(&file).unwrap();
    println!("stored {}  sha256 {}", r.url, r.file_digest);
    let name = r.url.rsplit('/').next().unwrap();
    let back = read_artifact(&store.lookup(name).unwrap()).unwrap();
    for (a, b) in file.entries.iter().zip(&back.entries) {
        println!("{:<10} {:?} {:<4} bit-equal={}", b.name, b.array.shape(), b.array.dtype().to_string(), a.bit_eq(b));
    }
}
