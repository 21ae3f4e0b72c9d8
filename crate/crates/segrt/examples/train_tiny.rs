//! Trains a small model on in-memory toy scenes and saves the weights —
//! the whole loop (Adam, plateau decay, early stopping, best-epoch
//! restore) in about a minute of CPU time.
//!
//! ```text
//! cargo run --release --example train_tiny
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segrt::dataset::{generate_toy_scene, SegmentationSample, ToySceneConfig};
use segrt::train::{fit, TrainConfig};
use segrt::weights::save_weights;
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
    let train_scenes = scenes(1, 0..16);
    let val_scenes = scenes(1, 1000..1004);

    // A steeper rectifier slope makes rare-class logits reach confident
    // values in far fewer optimizer steps than the 0.01 default.
    let mut model = SegModel::seeded(32, 32, 5)?.with_leaky_alpha(0.3)?;
    let config = TrainConfig {
        initial_lr: 0.05,
        batch_size: 4,
        max_epochs: 80,
        seed: 5,
        ..TrainConfig::default()
    };
    let history = fit(&mut model, &train_scenes, &val_scenes, &config, None, None, |r| {
        if r.epoch % 10 == 0 || r.epoch + 1 == config.max_epochs {
            println!(
                "epoch {:>3}: train {:.4} val {:.4} lr {:.2e}",
                r.epoch, r.train_loss, r.val_loss, r.learning_rate
            );
        }
    })?;

    println!(
        "best epoch {} with val loss {:.4}{}",
        history.best_epoch,
        history.best_val_loss,
        if history.stopped_early { " (stopped early)" } else { "" }
    );

    let out = std::env::temp_dir().join("segrt-example-tiny.sgrt");
    save_weights(&model, &out)?;
    println!("weights saved to {}", out.display());
    println!("history:\n{}", history.to_csv());
    Ok(())
}
