//! Seeded batch iteration: load → replace background → augment → subsample
//! → targets, with per-epoch shuffling and fully reproducible randomness.
//!
//! Every sample's randomness is keyed by `(seed, epoch, sample index)` — not
//! by iteration order — so a run is reproducible batch-for-batch, any single
//! sample's augmentation can be re-derived in isolation, and each epoch sees
//! both a fresh order and fresh augmentation draws.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::ops::replace_background;
use crate::augment::{apply_with_rng, augmentation_rng, AugmentationConfig};
use crate::dataset::mask::{mask_to_targets, SegmentationSample};
use crate::dataset::png_io::load_image;
use crate::dataset::resize::{subsample_image, subsample_mask};
use crate::error::{Error, Result};
use crate::tensor::{Batch, Tensor};

/// Anything that can produce samples by index (an on-disk manifest split, an
/// in-memory vector, a generator...).
pub trait SampleSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loads sample `index` (`0..len()`), at its native resolution.
    fn load(&self, index: usize) -> Result<SegmentationSample>;
}

impl SampleSource for Vec<SegmentationSample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn load(&self, index: usize) -> Result<SegmentationSample> {
        Ok(self[index].clone())
    }
}

impl<S: SampleSource + ?Sized> SampleSource for &S {
    fn len(&self) -> usize {
        (**self).len()
    }

    fn load(&self, index: usize) -> Result<SegmentationSample> {
        (**self).load(index)
    }
}

/// A non-empty set of photos used to replace toy-scene backgrounds.
pub struct BackgroundPool {
    images: Vec<Tensor>,
}

impl BackgroundPool {
    /// Loads every `.png`/`.jpg`/`.jpeg` directly inside `dir`, in name
    /// order.
    ///
    /// # Errors
    /// Errors if the directory cannot be read, any image fails to load, or
    /// no image is found.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
                    .unwrap_or(false)
            })
            .collect();
        paths.sort();
        let images = paths
            .iter()
            .map(load_image)
            .collect::<Result<Vec<_>>>()?;
        Self::from_images(images).map_err(|_| {
            Error::Config(format!("no background images found in {}", dir.display()))
        })
    }

    /// # Errors
    /// Errors on an empty pool.
    pub fn from_images(images: Vec<Tensor>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Config("background pool cannot be empty".into()));
        }
        Ok(BackgroundPool { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees at least one image
    }

    /// Uniform random pick.
    pub fn pick(&self, rng: &mut impl Rng) -> &Tensor {
        &self.images[rng.gen_range(0..self.images.len())]
    }
}

/// How one epoch of batches is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochOptions {
    pub batch_size: usize,
    /// Resolution samples are subsampled to (the model's input size).
    pub target_height: usize,
    pub target_width: usize,
    /// Master seed for shuffling and augmentation.
    pub seed: u64,
    /// Epoch number; changing it reshuffles and redraws augmentation.
    pub epoch: u64,
    /// Draw samples in a seeded random order instead of source order.
    pub shuffle: bool,
}

/// SplitMix64 finalizer: cheap, well-mixed hashing of seeds and indices.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Starts one epoch over `source`.
///
/// When `backgrounds` is given, class-0 pixels are replaced with a randomly
/// chosen pool image before augmentation; when `augment` is given, the full
/// pipeline runs on each (possibly background-swapped) sample. Both draws
/// come from one per-sample RNG stream.
///
/// # Errors
/// Errors on an empty source, a zero batch size, zero target dims, or an
/// invalid augmentation config.
pub fn iterate_batches<'a, S: SampleSource + ?Sized>(
    source: &'a S,
    options: EpochOptions,
    augment: Option<&'a AugmentationConfig>,
    backgrounds: Option<&'a BackgroundPool>,
) -> Result<BatchIter<'a, S>> {
    if source.is_empty() {
        return Err(Error::Config("cannot iterate over an empty sample source".into()));
    }
    if options.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if options.target_height == 0 || options.target_width == 0 {
        return Err(Error::Config("target resolution must be positive".into()));
    }
    if let Some(cfg) = augment {
        cfg.validate()?;
    }

    let epoch_seed = splitmix64(options.seed ^ splitmix64(options.epoch));
    let mut order: Vec<usize> = (0..source.len()).collect();
    if options.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    }
    Ok(BatchIter {
        source,
        augment,
        backgrounds,
        order,
        position: 0,
        options,
        epoch_seed,
    })
}

/// Iterator over `(inputs, targets)` batches; the final batch may be
/// smaller. See [`iterate_batches`].
pub struct BatchIter<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    augment: Option<&'a AugmentationConfig>,
    backgrounds: Option<&'a BackgroundPool>,
    order: Vec<usize>,
    position: usize,
    options: EpochOptions,
    epoch_seed: u64,
}

impl<S: SampleSource + ?Sized> BatchIter<'_, S> {
    /// Total batches this epoch will yield.
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.options.batch_size)
    }

    fn prepare(&self, source_index: usize) -> Result<(Tensor, Tensor)> {
        let mut sample = self.source.load(source_index)?;
        let sample_stream = splitmix64(self.epoch_seed ^ splitmix64(source_index as u64));
        let mut rng = augmentation_rng(self.options.seed, sample_stream);
        if let Some(pool) = self.backgrounds {
            replace_background(&mut sample, pool.pick(&mut rng));
        }
        if let Some(cfg) = self.augment {
            apply_with_rng(&mut sample, cfg, &mut rng);
        }
        let image = subsample_image(
            &sample.image,
            self.options.target_height,
            self.options.target_width,
        )?;
        let mask = subsample_mask(
            &sample.mask,
            self.options.target_height,
            self.options.target_width,
        )?;
        Ok((image, mask_to_targets(&mask)))
    }
}

impl<S: SampleSource + ?Sized> Iterator for BatchIter<'_, S> {
    type Item = Result<(Batch, Batch)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.position >= self.order.len() {
            return None;
        }
        let end = (self.position + self.options.batch_size).min(self.order.len());
        let mut inputs = Vec::with_capacity(end - self.position);
        let mut targets = Vec::with_capacity(end - self.position);
        for &source_index in &self.order[self.position..end] {
            match self.prepare(source_index) {
                Ok((image, target)) => {
                    inputs.push(image);
                    targets.push(target);
                }
                Err(e) => {
                    self.position = self.order.len(); // poison: stop iterating
                    return Some(Err(e));
                }
            }
        }
        self.position = end;
        Some(
            Batch::new(inputs)
                .and_then(|i| Batch::new(targets).map(|t| (i, t))),
        )
    }
}
