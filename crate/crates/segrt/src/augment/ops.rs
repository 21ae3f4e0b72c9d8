//! The individual augmentation operations.
//!
//! All photometric operations touch only the image — never the mask — and
//! clamp their result back into `[0, 1]`. The single geometric operation
//! (horizontal flip) transforms image and mask together. Every function here
//! is deterministic given its parameters; randomness lives in the pipeline
//! that draws those parameters.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::hsv::{hsv_to_rgb, rgb_to_hsv};
use crate::augment::polygon::Polygon;
use crate::augment::simplex::GradientNoise;
use crate::dataset::{fit_to, SegmentationSample};
use crate::tensor::{Shape, Tensor};

fn clamp_unit(image: &mut Tensor) {
    for v in image.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Mirrors image and mask left-right, keeping them aligned.
pub fn flip_horizontal(sample: &mut SegmentationSample) {
    let (h, w, c) = (
        sample.image.height(),
        sample.image.width(),
        sample.image.channels(),
    );
    for y in 0..h {
        for x in 0..w / 2 {
            for ch in 0..c {
                let a = sample.image.get(y, x, ch);
                let b = sample.image.get(y, w - 1 - x, ch);
                sample.image.set(y, x, ch, b);
                sample.image.set(y, w - 1 - x, ch, a);
            }
        }
    }
    sample.mask.flip_horizontal();
}

/// Adds i.i.d. Gaussian noise with the given standard deviation per value.
pub fn add_gaussian_noise(image: &mut Tensor, sigma: f64, rng: &mut impl Rng) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated positive");
    for v in image.data_mut() {
        *v += normal.sample(rng) as f32;
    }
    clamp_unit(image);
}

/// Scales all channels by one brightness factor.
pub fn multiply_brightness(image: &mut Tensor, factor: f32) {
    for v in image.data_mut() {
        *v *= factor;
    }
    clamp_unit(image);
}

/// Adds one offset to every channel of every pixel.
pub fn add_rgb(image: &mut Tensor, delta: f32) {
    for v in image.data_mut() {
        *v += delta;
    }
    clamp_unit(image);
}

/// Shifts hue (wrapping), saturation, and value per pixel.
pub fn shift_hsv(image: &mut Tensor, dh: f32, ds: f32, dv: f32) {
    for px in image.data_mut().chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (r, g, b) = hsv_to_rgb(h + dh, s + ds, v + dv);
        px.copy_from_slice(&[r, g, b]);
    }
    clamp_unit(image);
}

/// Adds a smooth brightness field: `strength * noise(x / feature, y / feature)`
/// applied equally to all channels (gray clouds, no hue shift).
pub fn overlay_gradient_noise(
    image: &mut Tensor,
    noise: &GradientNoise,
    feature_size: f64,
    strength: f32,
) {
    let (h, w) = (image.height(), image.width());
    for y in 0..h {
        for x in 0..w {
            let n = noise.sample(x as f64 / feature_size, y as f64 / feature_size) as f32;
            for v in image.pixel_mut(y, x) {
                *v += strength * n;
            }
        }
    }
    clamp_unit(image);
}

/// `length x length` normalized kernel with a one-pixel line through the
/// center at `angle` radians.
pub fn motion_blur_kernel(length: usize, angle: f64) -> Tensor {
    assert!(length >= 3 && length % 2 == 1, "kernel length must be odd and >= 3");
    let mut k = Tensor::zeros(Shape::new(length, length, 1));
    let c = (length / 2) as f64;
    let (sin, cos) = angle.sin_cos();
    for t in 0..length {
        let offset = t as f64 - c;
        let x = (c + offset * cos).round() as usize;
        let y = (c + offset * sin).round() as usize;
        k.set(y.min(length - 1), x.min(length - 1), 0, 1.0);
    }
    let sum: f32 = k.data().iter().sum();
    k.map_in_place(|v| v / sum);
    k
}

/// Index into `0..n` with symmetric border reflection (edge duplicated).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Convolves every channel with a single-channel kernel, reflecting at the
/// borders; with a motion-blur kernel this smears along one direction.
pub fn motion_blur(image: &Tensor, length: usize, angle: f64) -> Tensor {
    let kernel = motion_blur_kernel(length, angle);
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let half = (length / 2) as isize;
    let mut out = Tensor::zeros(image.shape());
    for y in 0..h {
        for x in 0..w {
            let mut acc = vec![0.0f32; c];
            for ky in 0..length {
                let sy = reflect(y as isize + ky as isize - half, h);
                for kx in 0..length {
                    let kv = kernel.get(ky, kx, 0);
                    if kv == 0.0 {
                        continue;
                    }
                    let sx = reflect(x as isize + kx as isize - half, w);
                    for (a, &s) in acc.iter_mut().zip(image.pixel(sy, sx)) {
                        *a += kv * s;
                    }
                }
            }
            out.pixel_mut(y, x).copy_from_slice(&acc);
        }
    }
    out
}

/// Linear contrast about mid-gray: `out = 0.5 + alpha * (in - 0.5)`.
pub fn normalize_contrast(image: &mut Tensor, alpha: f32) {
    for v in image.data_mut() {
        *v = 0.5 + alpha * (*v - 0.5);
    }
    clamp_unit(image);
}

/// Brightens every pixel covered by each polygon by its factor (simulated
/// sun patches on the field).
pub fn add_sun_patches(image: &mut Tensor, patches: &[(Polygon, f32)]) {
    let (h, w) = (image.height(), image.width());
    for (poly, factor) in patches {
        poly.covered_pixels(h, w, |y, x| {
            for v in image.pixel_mut(y, x) {
                *v *= factor;
            }
        });
    }
    clamp_unit(image);
}

/// Swaps every background pixel (mask class 0) for the matching pixel of
/// `background`, first fitting the background to the sample's size
/// (aspect-preserving scale + center crop). Foreground pixels and the mask
/// itself are untouched.
pub fn replace_background(sample: &mut SegmentationSample, background: &Tensor) {
    let (h, w) = (sample.image.height(), sample.image.width());
    let fitted = if background.height() == h && background.width() == w {
        None
    } else {
        Some(fit_to(background, h, w))
    };
    let bg = fitted.as_ref().unwrap_or(background);
    for y in 0..h {
        for x in 0..w {
            if sample.mask.get(y, x) == 0 {
                sample.image.pixel_mut(y, x).copy_from_slice(bg.pixel(y, x));
            }
        }
    }
}
