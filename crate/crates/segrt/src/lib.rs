//! Real-time semantic segmentation for RoboCup-style soccer scenes, written
//! from scratch in safe Rust with no machine-learning framework behind it.
//!
//! The crate contains everything needed to build, train, evaluate, and
//! benchmark a small encoder–decoder segmentation network on CPU:
//!
//! - [`tensor`] — dense `f32`/`f64` tensors in height × width × channel
//!   layout with the channel index innermost.
//! - [`layers`] — hand-written forward *and* backward passes for every
//!   operation: depthwise-separable 3×3 convolution, batch normalization
//!   (with running statistics and inference-time folding), leaky ReLU,
//!   2× nearest-neighbour upsampling, channel concatenation, sigmoid, and
//!   binary cross-entropy.
//! - [`model`] — the 19-block encoder–decoder ([`SegModel`]) with two skip
//!   connections. Input is RGB at any resolution divisible by 4; output is a
//!   5-channel score map at the same resolution.
//! - [`weights`] — a compact binary weight format with magic bytes, explicit
//!   dimensions, and a CRC-32 integrity check.
//! - [`dataset`] — PNG + JSON dataset IO with a fixed 6-class palette, a toy
//!   scene generator for self-contained experiments, split manifests, and
//!   batch iteration.
//! - [`augment`] — a seeded, fully deterministic augmentation pipeline
//!   (flips, HSV jitter, noise, blur, brightness gradients, occlusions, and
//!   mask-aware background replacement).
//! - [`train`] — Adam with plateau learning-rate decay and early stopping,
//!   plus CSV training history and optional checkpoints.
//! - [`eval`] — per-pixel precision/recall curves, average precision per
//!   class, micro-averaged mAP, and CSV/JSON export.
//! - [`mod@bench`] — latency measurement across a resolution ladder with a
//!   least-squares milliseconds-versus-pixels fit.
//! - [`verify`] — finite-difference gradient checking used by the test
//!   suite; every trainable parameter is validated numerically at `f64`.
//!
//! Determinism is a design rule throughout: toy-scene generation, weight
//! initialization, augmentation, batch shuffling, and training are all
//! seeded, and repeat runs produce byte-identical artifacts.
//!
//! # Quick start
//!
//! ```no_run
//! use segrt::SegModel;
//! use segrt::dataset::{generate_toy_dataset, ManifestSource, ToySceneConfig};
//! use segrt::train::{fit, TrainConfig};
//! use segrt::weights::save_weights;
//!
//! # fn main() -> segrt::Result<()> {
//! let dir = std::path::Path::new("toy-data");
//! let splits = [("train", 0.75), ("val", 0.25)];
//! generate_toy_dataset(dir, 32, ToySceneConfig::default(), 7, &splits)?;
//! let train = ManifestSource::open(dir.join("manifest.json"), Some("train"))?;
//! let val = ManifestSource::open(dir.join("manifest.json"), Some("val"))?;
//!
//! let mut model = SegModel::seeded(48, 64, 7)?.with_leaky_alpha(0.3)?;
//! let history = fit(&mut model, &train, &val, &TrainConfig::default(), None, None, |_| {})?;
//! println!("best validation loss {:.4}", history.best_val_loss);
//!
//! save_weights(&model, "model.sgrt")?;
//! # Ok(())
//! # }
//! ```
//!
//! The `segrt` binary wraps the same functionality as subcommands
//! (`gen-toy`, `replace-bg`, `augment-preview`, `train`, `infer`, `eval`,
//! `bench`, `params`); see [`cli`]. Runnable walkthroughs live under
//! `examples/`.

pub mod augment;
pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
pub use model::{Mode, SegModel};
pub use tensor::{Batch, Scalar, Shape, Tensor};
