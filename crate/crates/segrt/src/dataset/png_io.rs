//! PNG serialization for images and masks.
//!
//! Images round-trip through 8-bit RGB (`[0, 1]` floats scaled by 255).
//! Masks are written with exactly the palette colors and read back by exact
//! color match — an off-palette pixel is a hard error reporting its position
//! and color, because silently guessing a class would corrupt training data.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::dataset::mask::Mask;
use crate::dataset::palette::{class_for_rgb, rgb_for_class};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Writes an RGB image; values are clamped to `[0, 1]` then scaled to 8 bits.
///
/// # Errors
/// Errors on filesystem or encoding failure, or if the tensor is not
/// 3-channel.
pub fn save_image(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if image.channels() != 3 {
        return Err(Error::Precondition(format!(
            "PNG export needs a 3-channel image, got {} channels",
            image.channels()
        )));
    }
    let mut out = RgbImage::new(image.width() as u32, image.height() as u32);
    for y in 0..image.height() {
        for x in 0..image.width() {
            let px = image.pixel(y, x);
            let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            out.put_pixel(
                x as u32,
                y as u32,
                Rgb([to_u8(px[0]), to_u8(px[1]), to_u8(px[2])]),
            );
        }
    }
    out.save(path).map_err(|e| Error::image(path, e))
}

/// Reads an RGB image as `[0, 1]` floats (alpha, if any, is dropped).
pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(Shape::new(h, w, 3));
    for (y, x, &Rgb([r, g, b])) in img
        .enumerate_pixels()
        .map(|(x, y, p)| (y as usize, x as usize, p))
    {
        t.pixel_mut(y, x).copy_from_slice(&[
            f32::from(r) / 255.0,
            f32::from(g) / 255.0,
            f32::from(b) / 255.0,
        ]);
    }
    Ok(t)
}

/// Writes a mask as a PNG using the fixed class palette.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = RgbImage::new(mask.width() as u32, mask.height() as u32);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            out.put_pixel(x as u32, y as u32, Rgb(rgb_for_class(mask.get(y, x))));
        }
    }
    out.save(path).map_err(|e| Error::image(path, e))
}

/// Reads a mask PNG, requiring every pixel to be an exact palette color.
///
/// # Errors
/// [`Error::MaskColor`] (with position and color) on the first off-palette
/// pixel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let Rgb(rgb) = *img.get_pixel(x as u32, y as u32);
            match class_for_rgb(rgb) {
                Some(class) => data.push(class),
                None => {
                    return Err(Error::MaskColor {
                        path: path.to_path_buf(),
                        x: x as u32,
                        y: y as u32,
                        rgb,
                    })
                }
            }
        }
    }
    Mask::from_raw(h, w, data)
}
