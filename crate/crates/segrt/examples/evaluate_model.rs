//! Trains briefly, then measures detection quality on held-out scenes:
//! per-class precision-recall curves, average precision, micro-averaged
//! AP, and pixel accuracy, exported as CSV/JSON.
//!
//! ```text
//! cargo run --release --example evaluate_model
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segrt::dataset::{generate_toy_scene, SegmentationSample, ToySceneConfig};
use segrt::eval::{evaluate, export_report};
use segrt::train::{fit, TrainConfig};
use segrt::{Result, SegModel};

fn scenes(seed: u64, streams: std::ops::Range<u64>) -> Vec<SegmentationSample> {
    streams
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            generate_toy_scene(ToySceneConfig { height: 32, width: 32 }, &mut rng)
        })
        .collect()
}

fn main() -> Result<()> {
    let train_scenes = scenes(1, 0..32);
    let held_out = scenes(1, 5000..5016);

    let mut model = SegModel::seeded(32, 32, 5)?.with_leaky_alpha(0.3)?;
    let config = TrainConfig {
        initial_lr: 0.05,
        batch_size: 8,
        max_epochs: 200,
        seed: 5,
        ..TrainConfig::default()
    };
    fit(&mut model, &train_scenes, &held_out, &config, None, None, |_| {})?;

    let report = evaluate(&model, &held_out, 8)?;
    println!("evaluated {} held-out scenes", report.sample_count);
    for class in &report.classes {
        println!(
            "  AP {:<6} {:.4}  ({} positive px)",
            class.label, class.average_precision, class.curve.positives
        );
    }
    println!("micro-mAP {:.4}", report.micro_map);
    println!("pixel accuracy {:.4}", report.pixel_accuracy);

    let dir = std::env::temp_dir().join("segrt-example-eval");
    export_report(&report, &dir)?;
    println!("curves and summary exported to {}", dir.display());
    Ok(())
}
