//! Deterministic, seeded image augmentation.
//!
//! One pipeline invocation applies up to nine operations in a fixed order —
//! horizontal flip, Gaussian noise, brightness multiply, RGB add, HSV shift,
//! cloud overlay (gradient noise), motion blur, contrast change, sun patches
//! — each gated by its own probability and parameterized from ranges in
//! [`AugmentationConfig`]. Background replacement (swapping class-0 pixels
//! for a real photo) runs *before* this pipeline so the photometric ops also
//! touch the new background; see [`ops::replace_background`] and the batch
//! iterator in [`crate::dataset`].
//!
//! Determinism: every draw comes from a `ChaCha8` stream derived from
//! `(master_seed, sample_index)`, so augmentation of sample *i* is
//! reproducible in isolation — no dependence on iteration order or thread
//! count. The mask is only ever touched by the flip, which transforms image
//! and mask together; photometric ops cannot desynchronize labels.

mod hsv;
pub mod ops;
mod polygon;
mod simplex;

pub use hsv::{hsv_to_rgb, rgb_to_hsv};
pub use polygon::Polygon;
pub use simplex::GradientNoise;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::SegmentationSample;
use crate::error::{Error, Result};

/// Probabilities and parameter ranges for the augmentation pipeline.
///
/// Every operation fires independently with its own probability (0.5 for all
/// by default) and draws parameters uniformly from its range. Deserialization
/// rejects unknown keys; absent keys keep their defaults, so `{}` is the
/// default pipeline and `{"flip_probability": 0.0}` switches one thing off.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub flip_probability: f64,

    pub noise_probability: f64,
    /// Standard deviation of per-value Gaussian noise.
    pub noise_sigma_range: [f64; 2],

    pub brightness_probability: f64,
    /// Multiplicative brightness factor.
    pub brightness_range: [f64; 2],

    pub add_rgb_probability: f64,
    /// Offset added to all channels.
    pub add_rgb_range: [f64; 2],

    pub hsv_probability: f64,
    /// Hue shift as a fraction of a full turn (wraps).
    pub hue_shift_range: [f64; 2],
    pub saturation_shift_range: [f64; 2],
    pub value_shift_range: [f64; 2],

    pub cloud_probability: f64,
    /// Amplitude of the gray gradient-noise overlay.
    pub cloud_strength_range: [f64; 2],
    /// Feature size of the overlay, in pixels.
    pub cloud_feature_range: [f64; 2],

    pub blur_probability: f64,
    /// Motion blur kernel lengths to choose from (odd, >= 3).
    pub blur_lengths: Vec<usize>,

    pub contrast_probability: f64,
    /// Contrast slope about mid-gray.
    pub contrast_range: [f64; 2],

    pub sun_probability: f64,
    /// How many sun polygons to draw.
    pub sun_patch_count: [usize; 2],
    /// Brightness multiplier inside each polygon.
    pub sun_brightness_range: [f64; 2],
    /// Vertices per polygon.
    pub sun_vertex_count: [usize; 2],
    /// Polygon radius as a fraction of `min(height, width)`.
    pub sun_radius_fraction: [f64; 2],
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            flip_probability: 0.5,
            noise_probability: 0.5,
            noise_sigma_range: [0.0, 0.05],
            brightness_probability: 0.5,
            brightness_range: [0.7, 1.3],
            add_rgb_probability: 0.5,
            add_rgb_range: [-0.1, 0.1],
            hsv_probability: 0.5,
            hue_shift_range: [-0.05, 0.05],
            saturation_shift_range: [-0.2, 0.2],
            value_shift_range: [-0.2, 0.2],
            cloud_probability: 0.5,
            cloud_strength_range: [0.05, 0.25],
            cloud_feature_range: [8.0, 32.0],
            blur_probability: 0.5,
            blur_lengths: vec![3, 5, 7, 9],
            contrast_probability: 0.5,
            contrast_range: [0.5, 1.5],
            sun_probability: 0.5,
            sun_patch_count: [1, 4],
            sun_brightness_range: [1.1, 1.8],
            sun_vertex_count: [3, 6],
            sun_radius_fraction: [0.08, 0.25],
        }
    }
}

impl AugmentationConfig {
    /// A pipeline in which nothing ever fires (useful as a baseline and for
    /// evaluation-time loading).
    pub fn disabled() -> Self {
        AugmentationConfig {
            flip_probability: 0.0,
            noise_probability: 0.0,
            brightness_probability: 0.0,
            add_rgb_probability: 0.0,
            hsv_probability: 0.0,
            cloud_probability: 0.0,
            blur_probability: 0.0,
            contrast_probability: 0.0,
            sun_probability: 0.0,
            ..AugmentationConfig::default()
        }
    }

    /// Checks probabilities, range ordering, and kernel-length legality.
    pub fn validate(&self) -> Result<()> {
        let probabilities = [
            ("flip_probability", self.flip_probability),
            ("noise_probability", self.noise_probability),
            ("brightness_probability", self.brightness_probability),
            ("add_rgb_probability", self.add_rgb_probability),
            ("hsv_probability", self.hsv_probability),
            ("cloud_probability", self.cloud_probability),
            ("blur_probability", self.blur_probability),
            ("contrast_probability", self.contrast_probability),
            ("sun_probability", self.sun_probability),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        let ranges = [
            ("noise_sigma_range", self.noise_sigma_range),
            ("brightness_range", self.brightness_range),
            ("add_rgb_range", self.add_rgb_range),
            ("hue_shift_range", self.hue_shift_range),
            ("saturation_shift_range", self.saturation_shift_range),
            ("value_shift_range", self.value_shift_range),
            ("cloud_strength_range", self.cloud_strength_range),
            ("cloud_feature_range", self.cloud_feature_range),
            ("contrast_range", self.contrast_range),
            ("sun_brightness_range", self.sun_brightness_range),
            ("sun_radius_fraction", self.sun_radius_fraction),
        ];
        for (name, [lo, hi]) in ranges {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!(
                    "{name} must be a finite [lo, hi] with lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        if self.noise_sigma_range[0] < 0.0 {
            return Err(Error::Config("noise sigma cannot be negative".into()));
        }
        if self.brightness_range[0] <= 0.0 {
            return Err(Error::Config(
                "brightness factors must be positive".into(),
            ));
        }
        if self.cloud_feature_range[0] < 1.0 {
            return Err(Error::Config(
                "cloud feature size must be at least one pixel".into(),
            ));
        }
        if self.blur_lengths.is_empty()
            || self.blur_lengths.iter().any(|&l| l < 3 || l % 2 == 0)
        {
            return Err(Error::Config(format!(
                "blur_lengths must be non-empty odd lengths >= 3, got {:?}",
                self.blur_lengths
            )));
        }
        if self.sun_patch_count[0] < 1 || self.sun_patch_count[0] > self.sun_patch_count[1] {
            return Err(Error::Config(format!(
                "sun_patch_count must satisfy 1 <= lo <= hi, got {:?}",
                self.sun_patch_count
            )));
        }
        if self.sun_vertex_count[0] < 3
            || self.sun_vertex_count[0] > self.sun_vertex_count[1]
            || self.sun_vertex_count[1] > 12
        {
            return Err(Error::Config(format!(
                "sun_vertex_count must satisfy 3 <= lo <= hi <= 12, got {:?}",
                self.sun_vertex_count
            )));
        }
        if self.sun_radius_fraction[0] <= 0.0 || self.sun_radius_fraction[1] > 0.5 {
            return Err(Error::Config(format!(
                "sun_radius_fraction must satisfy 0 < lo <= hi <= 0.5, got {:?}",
                self.sun_radius_fraction
            )));
        }
        if self.sun_brightness_range[0] <= 0.0 {
            return Err(Error::Config(
                "sun brightness factors must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The RNG stream used to augment sample `sample_index` under `master_seed`.
pub fn augmentation_rng(master_seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_index);
    rng
}

fn draw(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    rng.gen_range(lo..=hi)
}

/// Runs the full pipeline on a copy of `sample`, with all randomness derived
/// from `(master_seed, sample_index)`.
///
/// # Errors
/// Errors if the config fails validation.
pub fn apply_pipeline(
    sample: &SegmentationSample,
    config: &AugmentationConfig,
    master_seed: u64,
    sample_index: u64,
) -> Result<SegmentationSample> {
    config.validate()?;
    let mut rng = augmentation_rng(master_seed, sample_index);
    let mut out = sample.clone();
    apply_with_rng(&mut out, config, &mut rng);
    Ok(out)
}

/// Pipeline body, reusable with an externally managed RNG. The config must
/// already be validated.
pub(crate) fn apply_with_rng(
    sample: &mut SegmentationSample,
    config: &AugmentationConfig,
    rng: &mut impl Rng,
) {
    if rng.gen_bool(config.flip_probability) {
        ops::flip_horizontal(sample);
    }
    if rng.gen_bool(config.noise_probability) {
        let sigma = draw(rng, config.noise_sigma_range);
        ops::add_gaussian_noise(&mut sample.image, sigma, rng);
    }
    if rng.gen_bool(config.brightness_probability) {
        let factor = draw(rng, config.brightness_range) as f32;
        ops::multiply_brightness(&mut sample.image, factor);
    }
    if rng.gen_bool(config.add_rgb_probability) {
        let delta = draw(rng, config.add_rgb_range) as f32;
        ops::add_rgb(&mut sample.image, delta);
    }
    if rng.gen_bool(config.hsv_probability) {
        let dh = draw(rng, config.hue_shift_range) as f32;
        let ds = draw(rng, config.saturation_shift_range) as f32;
        let dv = draw(rng, config.value_shift_range) as f32;
        ops::shift_hsv(&mut sample.image, dh, ds, dv);
    }
    if rng.gen_bool(config.cloud_probability) {
        let noise = GradientNoise::new(rng);
        let feature = draw(rng, config.cloud_feature_range);
        let strength = draw(rng, config.cloud_strength_range) as f32;
        ops::overlay_gradient_noise(&mut sample.image, &noise, feature, strength);
    }
    if rng.gen_bool(config.blur_probability) {
        let length = config.blur_lengths[rng.gen_range(0..config.blur_lengths.len())];
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        sample.image = ops::motion_blur(&sample.image, length, angle);
    }
    if rng.gen_bool(config.contrast_probability) {
        let alpha = draw(rng, config.contrast_range) as f32;
        ops::normalize_contrast(&mut sample.image, alpha);
    }
    if rng.gen_bool(config.sun_probability) {
        let (h, w) = (sample.image.height(), sample.image.width());
        let scale = h.min(w) as f64;
        let count = rng.gen_range(config.sun_patch_count[0]..=config.sun_patch_count[1]);
        let mut patches = Vec::with_capacity(count);
        for _ in 0..count {
            let cx = rng.gen_range(0.0..w as f64);
            let cy = rng.gen_range(0.0..h as f64);
            let r_lo = config.sun_radius_fraction[0] * scale;
            let r_hi = config.sun_radius_fraction[1] * scale;
            let vertices =
                rng.gen_range(config.sun_vertex_count[0]..=config.sun_vertex_count[1]);
            let poly = Polygon::random_star(rng, cx, cy, (r_lo, r_hi), vertices)
                .expect("validated ranges produce legal stars");
            let factor = draw(rng, config.sun_brightness_range) as f32;
            patches.push((poly, factor));
        }
        ops::add_sun_patches(&mut sample.image, &patches);
    }
}
