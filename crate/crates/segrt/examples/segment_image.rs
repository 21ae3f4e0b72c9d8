//! Segments an image: loads trained weights when a path is given
//! (`cargo run --release --example segment_image -- weights.sgrt`),
//! otherwise trains briefly on toy scenes first. Writes the input, the
//! predicted mask, and the ground truth side by side.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segrt::dataset::{
    generate_toy_scene, probabilities_to_mask, save_image, save_mask, SegmentationSample,
    ToySceneConfig,
};
use segrt::layers::sigmoid;
use segrt::tensor::Batch;
use segrt::train::{fit, TrainConfig};
use segrt::weights::load_weights;
use segrt::{Result, SegModel};

const SLOPE: f64 = 0.3;

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
    let model = match std::env::args().nth(1) {
        Some(path) => {
            println!("loading weights from {path}");
            load_weights(path)?.with_leaky_alpha(SLOPE)?
        }
        None => {
            println!("no weights given; training briefly on toy scenes");
            let data = scenes(1, 0..16);
            let mut model = SegModel::seeded(32, 32, 5)?.with_leaky_alpha(SLOPE)?;
            let config = TrainConfig {
                initial_lr: 0.05,
                batch_size: 4,
                max_epochs: 40,
                seed: 5,
                ..TrainConfig::default()
            };
            fit(&mut model, &data, &data, &config, None, None, |_| {})?;
            model.set_mode(segrt::Mode::Infer);
            model
        }
    };
    // Folding the batch norms makes per-image inference cheaper.
    let model = model.prepare_inference()?;
    let shape = model.input_shape();

    // A scene the model never saw.
    let fresh = &scenes(99, 0..1)[0];
    let logits = model.forward_infer(&Batch::single(fresh.image.clone()))?;
    let probabilities = sigmoid(&logits);
    let predicted = probabilities_to_mask(&probabilities.items()[0])?;

    let dir = std::env::temp_dir().join("segrt-example-segment");
    std::fs::create_dir_all(&dir).expect("create output dir");
    save_image(&fresh.image, dir.join("input.png"))?;
    save_mask(&predicted, dir.join("predicted.png"))?;
    save_mask(&fresh.mask, dir.join("truth.png"))?;

    let correct = predicted
        .data()
        .iter()
        .zip(fresh.mask.data())
        .filter(|(a, b)| a == b)
        .count();
    println!(
        "pixel agreement with truth: {:.1}% ({}x{} input)",
        100.0 * correct as f64 / predicted.data().len() as f64,
        shape.width,
        shape.height
    );
    println!("images in {}", dir.display());
    Ok(())
}
