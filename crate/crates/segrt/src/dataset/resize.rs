//! Resolution changes: integer-factor subsampling for training inputs and
//! nearest-neighbor fitting for replacement backgrounds.
//!
//! Downscaling for the network is deliberately plain decimation (keep every
//! k-th pixel) rather than averaging: it is what a camera pipeline that
//! skips rows/columns produces, it is exact for masks (no invented classes),
//! and image and mask stay perfectly aligned.

use crate::dataset::mask::Mask;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

fn decimation_factors(
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Result<(usize, usize)> {
    if dst_h == 0 || dst_w == 0 || dst_h > src_h || dst_w > src_w {
        return Err(Error::Precondition(format!(
            "cannot subsample {src_h}x{src_w} to {dst_h}x{dst_w}: target must be a positive size no larger than the source"
        )));
    }
    if src_h % dst_h != 0 || src_w % dst_w != 0 {
        return Err(Error::Precondition(format!(
            "cannot subsample {src_h}x{src_w} to {dst_h}x{dst_w}: each source dim must be an integer multiple of the target dim"
        )));
    }
    Ok((src_h / dst_h, src_w / dst_w))
}

/// Keeps every `(src/dst)`-th pixel per axis. Identity when sizes match.
///
/// # Errors
/// Errors unless each source dim is a positive integer multiple of the
/// matching target dim.
pub fn subsample_image(image: &Tensor, dst_h: usize, dst_w: usize) -> Result<Tensor> {
    let (fy, fx) = decimation_factors(image.height(), image.width(), dst_h, dst_w)?;
    let c = image.channels();
    let mut out = Tensor::zeros(Shape::new(dst_h, dst_w, c));
    for y in 0..dst_h {
        for x in 0..dst_w {
            out.pixel_mut(y, x).copy_from_slice(image.pixel(y * fy, x * fx));
        }
    }
    Ok(out)
}

/// Mask counterpart of [`subsample_image`]; class indices are kept exactly.
pub fn subsample_mask(mask: &Mask, dst_h: usize, dst_w: usize) -> Result<Mask> {
    let (fy, fx) = decimation_factors(mask.height(), mask.width(), dst_h, dst_w)?;
    let mut data = Vec::with_capacity(dst_h * dst_w);
    for y in 0..dst_h {
        for x in 0..dst_w {
            data.push(mask.get(y * fy, x * fx));
        }
    }
    Mask::from_raw(dst_h, dst_w, data)
}

/// Nearest-neighbor resample to an exact size (up or down, any ratio).
pub fn nearest_resize(image: &Tensor, dst_h: usize, dst_w: usize) -> Tensor {
    assert!(dst_h > 0 && dst_w > 0, "target dims must be positive");
    let (src_h, src_w, c) = (image.height(), image.width(), image.channels());
    let mut out = Tensor::zeros(Shape::new(dst_h, dst_w, c));
    for y in 0..dst_h {
        let sy = (y * src_h / dst_h).min(src_h - 1);
        for x in 0..dst_w {
            let sx = (x * src_w / dst_w).min(src_w - 1);
            out.pixel_mut(y, x).copy_from_slice(image.pixel(sy, sx));
        }
    }
    out
}

/// Fills a `dst_h x dst_w` frame with `image`: scales preserving aspect ratio
/// until both dims cover the frame, then center-crops the overhang. Used to
/// adapt arbitrary background photos to a sample's resolution.
pub fn fit_to(image: &Tensor, dst_h: usize, dst_w: usize) -> Tensor {
    assert!(dst_h > 0 && dst_w > 0, "target dims must be positive");
    let (src_h, src_w) = (image.height() as f64, image.width() as f64);
    let scale = (dst_h as f64 / src_h).max(dst_w as f64 / src_w);
    let scaled_h = (src_h * scale).round().max(dst_h as f64) as usize;
    let scaled_w = (src_w * scale).round().max(dst_w as f64) as usize;
    let scaled = nearest_resize(image, scaled_h, scaled_w);
    let off_y = (scaled_h - dst_h) / 2;
    let off_x = (scaled_w - dst_w) / 2;
    let mut out = Tensor::zeros(Shape::new(dst_h, dst_w, image.channels()));
    for y in 0..dst_h {
        for x in 0..dst_w {
            out.pixel_mut(y, x)
                .copy_from_slice(scaled.pixel(y + off_y, x + off_x));
        }
    }
    out
}
