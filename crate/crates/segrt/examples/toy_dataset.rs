//! Generates a small synthetic dataset — simple playing-field scenes with
//! pixel-exact masks — and prints what landed on disk.
//!
//! ```text
//! cargo run --release --example toy_dataset
//! ```

use segrt::dataset::{class_name, generate_toy_dataset, ManifestSource, SampleSource, ToySceneConfig};
use segrt::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("segrt-example-toy");
    let manifest = generate_toy_dataset(
        &dir,
        24,
        ToySceneConfig::default(),
        7,
        &[("train", 0.75), ("val", 0.125), ("test", 0.125)],
    )?;

    println!("wrote {} scenes to {}", manifest.entries.len(), dir.display());
    for (name, indices) in &manifest.splits {
        println!("  split {name}: {} scenes", indices.len());
    }

    // Load one sample back and show its class mix.
    let source = ManifestSource::open(dir.join("manifest.json"), Some("train"))?;
    let sample = source.load(0)?;
    println!(
        "first train scene: {}x{} pixels",
        sample.image.shape().width,
        sample.image.shape().height
    );
    let histogram = sample.mask.class_histogram();
    for (class, count) in histogram.iter().enumerate() {
        if *count > 0 {
            println!("  {:<10} {:>5} px", class_name(class as u8), count);
        }
    }
    Ok(())
}
