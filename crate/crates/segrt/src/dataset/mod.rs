//! Datasets: the class palette, mask handling, PNG and manifest IO, a toy
//! scene generator, and seeded batch iteration.
//!
//! A sample is an RGB image (`f32` in `[0, 1]`, channels innermost) plus a
//! per-pixel class mask. Masks use six classes — background, field, line,
//! robot, ball, goal post — stored as indices `0..=5` and serialized as PNGs
//! with one exact color per class (see [`PALETTE`]). The network predicts the
//! five non-background classes; background is "none of them".

mod loader;
mod manifest;
mod mask;
mod palette;
mod png_io;
mod resize;
mod toy;

pub use loader::{iterate_batches, BackgroundPool, BatchIter, EpochOptions, SampleSource};
pub use manifest::{split_manifest, DatasetManifest, ManifestEntry, ManifestSource};
pub use mask::{mask_to_targets, probabilities_to_mask, Mask, SegmentationSample};
pub use palette::{
    class_for_rgb, class_name, rgb_for_class, PaletteEntry, BACKGROUND, BALL, CLASS_COUNT, FIELD,
    GOAL_POST, LINE, PALETTE, ROBOT,
};
pub use png_io::{load_image, load_mask, save_image, save_mask};
pub use resize::{fit_to, nearest_resize, subsample_image, subsample_mask};
pub use toy::{generate_toy_dataset, generate_toy_scene, ToySceneConfig};
