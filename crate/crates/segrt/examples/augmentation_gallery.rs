//! Writes a gallery of augmented variants of one scene so the pipeline can
//! be inspected visually: flips, noise, brightness, color shifts, cloud
//! shadows, motion blur, contrast, and sun patches, each variant with its
//! (possibly flipped) mask.
//!
//! ```text
//! cargo run --release --example augmentation_gallery
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segrt::augment::{apply_pipeline, AugmentationConfig};
use segrt::dataset::{generate_toy_scene, save_image, save_mask, ToySceneConfig};
use segrt::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("segrt-example-gallery");
    std::fs::create_dir_all(&dir).expect("create output dir");

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scene = generate_toy_scene(ToySceneConfig::default(), &mut rng);
    save_image(&scene.image, dir.join("original.png"))?;
    save_mask(&scene.mask, dir.join("original_mask.png"))?;

    let config = AugmentationConfig::default();
    for index in 0..8u64 {
        // Same (seed, index) always yields the same variant.
        let variant = apply_pipeline(&scene, &config, 11, index)?;
        save_image(&variant.image, dir.join(format!("variant_{index}.png")))?;
        save_mask(&variant.mask, dir.join(format!("variant_{index}_mask.png")))?;
    }
    println!("wrote original + 8 variants to {}", dir.display());
    Ok(())
}
