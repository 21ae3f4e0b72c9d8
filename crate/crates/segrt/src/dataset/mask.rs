//! Per-pixel class masks and labeled samples.

use crate::dataset::palette::CLASS_COUNT;
use crate::error::{Error, Result};
use crate::model::{probabilities_to_classes, CLASS_CHANNELS};
use crate::tensor::{Shape, Tensor};

/// A dense `height x width` grid of class indices (`0..=5`, row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    /// All-background mask.
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dims must be positive");
        Mask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    /// Wraps raw class indices.
    ///
    /// # Errors
    /// Errors if the length is not `height * width` or any value is not a
    /// valid class index.
    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Precondition(format!(
                "mask data has {} entries, expected {height}x{width} = {}",
                data.len(),
                height * width
            )));
        }
        if let Some(&bad) = data.iter().find(|&&c| c as usize >= CLASS_COUNT) {
            return Err(Error::Precondition(format!(
                "mask contains class index {bad}, valid range is 0..={}",
                CLASS_COUNT - 1
            )));
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// # Panics
    /// Panics on an out-of-range class index (programmer error).
    #[inline]
    pub fn set(&mut self, y: usize, x: usize, class: u8) {
        debug_assert!((class as usize) < CLASS_COUNT);
        self.data[y * self.width + x] = class;
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Mirrors left-right in place.
    pub fn flip_horizontal(&mut self) {
        for row in self.data.chunks_exact_mut(self.width) {
            row.reverse();
        }
    }

    /// Pixel count per class, indexed by class.
    pub fn class_histogram(&self) -> [usize; CLASS_COUNT] {
        let mut counts = [0usize; CLASS_COUNT];
        for &c in &self.data {
            counts[c as usize] += 1;
        }
        counts
    }
}

/// An RGB image (values in `[0, 1]`) with its aligned class mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationSample {
    pub image: Tensor,
    pub mask: Mask,
}

impl SegmentationSample {
    /// # Errors
    /// Errors unless the image is 3-channel and matches the mask's size.
    pub fn new(image: Tensor, mask: Mask) -> Result<Self> {
        if image.channels() != 3 {
            return Err(Error::Precondition(format!(
                "sample image must have 3 channels, got {}",
                image.channels()
            )));
        }
        if image.height() != mask.height() || image.width() != mask.width() {
            return Err(Error::Precondition(format!(
                "image {}x{} does not match mask {}x{}",
                image.height(),
                image.width(),
                mask.height(),
                mask.width()
            )));
        }
        Ok(SegmentationSample { image, mask })
    }

    /// Training targets for this sample's mask; see [`mask_to_targets`].
    pub fn targets(&self) -> Tensor {
        mask_to_targets(&self.mask)
    }
}

/// One-hot-per-channel training targets: channel `c` is 1.0 where the mask
/// class is `c + 1` (background pixels are zero in every channel).
pub fn mask_to_targets(mask: &Mask) -> Tensor {
    let shape = Shape::new(mask.height(), mask.width(), CLASS_CHANNELS);
    let mut t = Tensor::zeros(shape);
    for (px, &class) in t
        .data_mut()
        .chunks_exact_mut(CLASS_CHANNELS)
        .zip(mask.data())
    {
        if class > 0 {
            px[class as usize - 1] = 1.0;
        }
    }
    t
}

/// Hard per-pixel decision over a `h x w x 5` **probability** tensor: the
/// highest class with probability ≥ 0.5 wins, otherwise background.
pub fn probabilities_to_mask(probs: &Tensor) -> Result<Mask> {
    if probs.channels() != CLASS_CHANNELS {
        return Err(Error::Precondition(format!(
            "expected {CLASS_CHANNELS} probability channels, got {}",
            probs.channels()
        )));
    }
    Mask::from_raw(
        probs.height(),
        probs.width(),
        probabilities_to_classes(probs),
    )
}
