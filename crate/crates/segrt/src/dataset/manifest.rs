//! JSON dataset manifests: the list of image/mask pairs, the palette they
//! use, and named train/val/test splits.
//!
//! A manifest lives next to its data; entry paths are relative to the
//! manifest's directory. The palette is embedded so a manifest is
//! self-describing, and rejected on load if it does not match this build's
//! palette — silently reinterpreting classes would be far worse than failing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::loader::SampleSource;
use crate::dataset::mask::SegmentationSample;
use crate::dataset::palette::PALETTE;
use crate::dataset::png_io::{load_image, load_mask};
use crate::error::{Error, Result};

/// One labeled sample: image and mask paths relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: String,
    pub mask: String,
}

/// Serde-friendly palette row (the in-code palette uses static strings).
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaletteRow {
    pub class: u8,
    pub name: String,
    pub rgb: [u8; 3],
}

fn builtin_palette_rows() -> Vec<PaletteRow> {
    PALETTE
        .iter()
        .map(|e| PaletteRow {
            class: e.class,
            name: e.name.to_string(),
            rgb: e.rgb,
        })
        .collect()
}

/// The on-disk description of a dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub palette: Vec<PaletteRow>,
    pub entries: Vec<ManifestEntry>,
    /// Split name -> entry indices. Splits must be disjoint.
    #[serde(default)]
    pub splits: BTreeMap<String, Vec<usize>>,
    /// Seed used to shuffle entries when the splits were drawn.
    #[serde(default)]
    pub split_seed: Option<u64>,
}

impl DatasetManifest {
    /// Manifest over `entries` with no splits yet.
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            palette: builtin_palette_rows(),
            entries,
            splits: BTreeMap::new(),
            split_seed: None,
        }
    }

    /// Checks palette compatibility, split index ranges, and disjointness.
    pub fn validate(&self) -> Result<()> {
        if self.palette != builtin_palette_rows() {
            return Err(Error::Manifest(
                "manifest palette does not match this build's palette".into(),
            ));
        }
        let mut seen = vec![false; self.entries.len()];
        for (name, indices) in &self.splits {
            for &i in indices {
                if i >= self.entries.len() {
                    return Err(Error::Manifest(format!(
                        "split {name:?} references entry {i}, but there are only {}",
                        self.entries.len()
                    )));
                }
                if seen[i] {
                    return Err(Error::Manifest(format!(
                        "entry {i} appears in more than one split (or twice in {name:?})"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }

    /// Pretty-printed JSON to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).expect("manifest always serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Loads and validates a manifest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&raw).map_err(|e| Error::ConfigParse {
                path: path.to_path_buf(),
                source: e,
            })?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Indices belonging to a named split.
    pub fn split_indices(&self, split: &str) -> Result<&[usize]> {
        self.splits
            .get(split)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                Error::Manifest(format!(
                    "no split named {split:?}; available: {:?}",
                    self.splits.keys().collect::<Vec<_>>()
                ))
            })
    }
}

/// Replaces a manifest's splits with a fresh seeded partition.
///
/// Entries are shuffled once with the seed, then dealt contiguously into the
/// named fractions (cumulative rounding, so counts differ from exact
/// fractions by at most one). Fractions must be positive and sum to at most
/// 1; any remainder is left unassigned.
pub fn split_manifest(
    manifest: &mut DatasetManifest,
    fractions: &[(&str, f64)],
    seed: u64,
) -> Result<()> {
    let total: f64 = fractions.iter().map(|(_, f)| *f).sum();
    if fractions.iter().any(|(_, f)| *f <= 0.0) || total > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to at most 1 (got sum {total})"
        )));
    }
    let mut names = std::collections::HashSet::new();
    if !fractions.iter().all(|(n, _)| names.insert(*n)) {
        return Err(Error::Config("split names must be unique".into()));
    }

    let mut order: Vec<usize> = (0..manifest.entries.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n = order.len() as f64;
    let mut splits = BTreeMap::new();
    let mut cumulative = 0.0;
    let mut start = 0usize;
    for (name, fraction) in fractions {
        cumulative += fraction;
        let end = (n * cumulative).round() as usize;
        splits.insert(name.to_string(), order[start..end.min(order.len())].to_vec());
        start = end.min(order.len());
    }
    manifest.splits = splits;
    manifest.split_seed = Some(seed);
    manifest.validate()
}

/// Lazily loads one split (or everything) of an on-disk dataset.
pub struct ManifestSource {
    root: PathBuf,
    manifest: DatasetManifest,
    indices: Vec<usize>,
}

impl ManifestSource {
    /// Opens `manifest_path`, restricted to `split` when given.
    pub fn open(manifest_path: impl AsRef<Path>, split: Option<&str>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DatasetManifest::load(manifest_path)?;
        let indices = match split {
            Some(name) => manifest.split_indices(name)?.to_vec(),
            None => (0..manifest.entries.len()).collect(),
        };
        let root = manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        Ok(ManifestSource {
            root,
            manifest,
            indices,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }
}

impl SampleSource for ManifestSource {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn load(&self, index: usize) -> Result<SegmentationSample> {
        let entry = &self.manifest.entries[self.indices[index]];
        let image = load_image(self.root.join(&entry.image))?;
        let mask = load_mask(self.root.join(&entry.mask))?;
        SegmentationSample::new(image, mask)
    }
}
