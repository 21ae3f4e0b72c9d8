//! Synthetic scenes for end-to-end exercising of the whole pipeline without
//! any real captures: a gray "stand" region above a green field with white
//! lines, plus optional goal posts, robots, and balls.
//!
//! Scenes are flat-shaded (augmentation adds the texture later), drawn
//! bottom-up so later objects correctly occlude earlier ones, and the mask is
//! painted by the same brushes as the image, so image and labels cannot
//! disagree.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::manifest::{split_manifest, DatasetManifest, ManifestEntry};
use crate::dataset::mask::{Mask, SegmentationSample};
use crate::dataset::palette::{BALL, FIELD, GOAL_POST, LINE, ROBOT};
use crate::dataset::png_io::{save_image, save_mask};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Size of generated scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ToySceneConfig {
    pub height: usize,
    pub width: usize,
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        ToySceneConfig {
            height: 48,
            width: 64,
        }
    }
}

struct Canvas {
    image: Tensor,
    mask: Mask,
}

impl Canvas {
    fn paint(&mut self, y: usize, x: usize, color: [f32; 3], class: u8) {
        self.image.pixel_mut(y, x).copy_from_slice(&color);
        self.mask.set(y, x, class);
    }

    fn fill_rect(
        &mut self,
        y0: usize,
        y1: usize,
        x0: usize,
        x1: usize,
        color: [f32; 3],
        class: u8,
    ) {
        let (h, w) = (self.mask.height(), self.mask.width());
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                self.paint(y, x, color, class);
            }
        }
    }

    fn fill_circle(&mut self, cy: f64, cx: f64, r: f64, color: [f32; 3], class: u8) {
        let (h, w) = (self.mask.height(), self.mask.width());
        let y0 = (cy - r).floor().max(0.0) as usize;
        let y1 = ((cy + r).ceil() as usize + 1).min(h);
        let x0 = (cx - r).floor().max(0.0) as usize;
        let x1 = ((cx + r).ceil() as usize + 1).min(w);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= r * r {
                    self.paint(y, x, color, class);
                }
            }
        }
    }
}

fn jitter(rng: &mut impl Rng, base: [f32; 3], amount: f32) -> [f32; 3] {
    let mut out = base;
    for v in &mut out {
        *v = (*v + rng.gen_range(-amount..=amount)).clamp(0.0, 1.0);
    }
    out
}

/// Draws one random scene.
pub fn generate_toy_scene(config: ToySceneConfig, rng: &mut impl Rng) -> SegmentationSample {
    let (h, w) = (config.height, config.width);
    assert!(h >= 16 && w >= 16, "toy scenes need at least 16x16 pixels");
    let mut canvas = Canvas {
        image: Tensor::zeros(Shape::new(h, w, 3)),
        mask: Mask::new(h, w),
    };

    let horizon = rng.gen_range(h / 5..=h * 2 / 5);

    // Stand/background above the horizon, field below.
    let gray = rng.gen_range(0.35f32..0.65);
    let bg = jitter(rng, [gray, gray, gray], 0.05);
    canvas.fill_rect(0, horizon, 0, w, bg, crate::dataset::palette::BACKGROUND);
    let field = jitter(rng, [0.10, 0.45, 0.12], 0.05);
    canvas.fill_rect(horizon, h, 0, w, field, FIELD);

    // Lines: one or two horizontal plus one or two vertical, all on the field.
    let line_color = jitter(rng, [0.92, 0.92, 0.92], 0.04);
    let thickness = 1 + h / 40;
    let field_h = h - horizon;
    for _ in 0..rng.gen_range(1..=2usize) {
        let y0 = rng.gen_range(horizon + field_h / 8..h - thickness);
        canvas.fill_rect(y0, y0 + thickness, 0, w, line_color, LINE);
    }
    for _ in 0..rng.gen_range(1..=2usize) {
        let x0 = rng.gen_range(1..w - thickness);
        canvas.fill_rect(horizon + 1, h, x0, x0 + thickness, line_color, LINE);
    }

    // Goal posts straddle the horizon.
    for _ in 0..rng.gen_range(0..=2usize) {
        let post_w = (w / 24).max(2);
        let above = rng.gen_range(h / 8..=h / 4);
        let below = rng.gen_range(1..=(h / 16).max(2));
        let x0 = rng.gen_range(0..w - post_w);
        let y0 = horizon.saturating_sub(above);
        let color = jitter(rng, [0.72, 0.74, 0.93], 0.04);
        canvas.fill_rect(y0, (horizon + below).min(h), x0, x0 + post_w, color, GOAL_POST);
    }

    // Robots stand on the field.
    for _ in 0..rng.gen_range(0..=2usize) {
        let rw = rng.gen_range((w / 12).max(3)..=(w / 7).max(4));
        let rh = rng.gen_range((h / 6).max(4)..=(h * 3 / 10).max(5));
        let bottom = rng.gen_range((horizon + rh + 1).min(h - 1)..=h);
        let x0 = rng.gen_range(0..w - rw);
        let color = jitter(rng, [0.55, 0.12, 0.45], 0.06);
        canvas.fill_rect(bottom.saturating_sub(rh), bottom, x0, x0 + rw, color, ROBOT);
    }

    // Balls roll on the field, painted last so they occlude everything.
    for _ in 0..rng.gen_range(0..=2usize) {
        let r = rng.gen_range((h as f64 / 30.0).max(1.2)..=(h as f64 / 14.0).max(1.8));
        let cy = rng.gen_range(horizon as f64 + r..h as f64 - r);
        let cx = rng.gen_range(r..w as f64 - r);
        let color = jitter(rng, [0.88, 0.28, 0.10], 0.05);
        canvas.fill_circle(cy, cx, r, color, BALL);
    }

    SegmentationSample {
        image: canvas.image,
        mask: canvas.mask,
    }
}

/// The RNG used for scene `index` of a dataset seeded with `seed`; exposed so
/// any sample of a generated dataset can be re-derived independently.
pub(crate) fn scene_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Writes `count` scenes to `dir` (`images/`, `masks/`, `manifest.json`) and
/// returns the manifest, with splits drawn from `fractions` when given.
pub fn generate_toy_dataset(
    dir: impl AsRef<Path>,
    count: usize,
    config: ToySceneConfig,
    seed: u64,
    fractions: &[(&str, f64)],
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    if count == 0 {
        return Err(Error::Config("toy dataset needs at least one scene".into()));
    }
    let images = dir.join("images");
    let masks = dir.join("masks");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    std::fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;

    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let sample = generate_toy_scene(config, &mut scene_rng(seed, i as u64));
        let image_rel = format!("images/{i:05}.png");
        let mask_rel = format!("masks/{i:05}.png");
        save_image(&sample.image, dir.join(&image_rel))?;
        save_mask(&sample.mask, dir.join(&mask_rel))?;
        entries.push(ManifestEntry {
            image: image_rel,
            mask: mask_rel,
        });
    }

    let mut manifest = DatasetManifest::new(entries);
    if !fractions.is_empty() {
        split_manifest(&mut manifest, fractions, seed)?;
    }
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}
