//! Per-pixel detection quality: precision-recall curves, average precision
//! (AP) per class, micro-averaged AP over all classes, and deterministic
//! CSV/JSON export.
//!
//! Every pixel of every evaluated image contributes one score (the sigmoid
//! probability) and one binary label per class channel. A PR curve sweeps a
//! decision threshold over those scores; AP is the area under it computed as
//! `sum (R_n - R_{n-1}) * P_n` from `R_0 = 0`. "Micro" pooling concatenates
//! the scores of all five channels into one curve, weighting every pixel
//! decision equally across classes.

use std::collections::BTreeMap;
use std::path::Path;

use crate::dataset::SampleSource;
use crate::error::{Error, Result};
use crate::layers::sigmoid;
use crate::model::{probabilities_to_classes, SegModel, CLASS_CHANNELS};
use crate::tensor::Tensor;
use crate::train::mean_bce_loss;

/// Above this many pooled scores, curves switch from the exact sweep (one
/// threshold per distinct score) to fixed uniform bins.
pub const EXACT_SWEEP_LIMIT: usize = 100_000;

/// Bin count for the binned sweep.
pub const BIN_COUNT: usize = 1024;

/// Row labels of the evaluation summary, in output order, with the output
/// channel each one reads (`None` = pooled over all channels).
pub const SUMMARY_ROWS: [(&str, Option<usize>); 6] = [
    ("Ball", Some(3)),
    ("Field", Some(0)),
    ("Line", Some(1)),
    ("Goal", Some(4)),
    ("Robot", Some(2)),
    ("All", None),
];

/// How a curve's thresholds were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SweepMode {
    /// One threshold per distinct score.
    Exact,
    /// Uniform thresholds `k / bins` for `k = bins..=0`.
    Binned(usize),
}

/// One operating point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// A full precision-recall sweep (recall is non-decreasing along `points`).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub mode: SweepMode,
    pub positives: usize,
    pub negatives: usize,
}

fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0 // no predictions, no false alarms
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// Builds the PR curve for one class, picking the sweep automatically:
/// exact up to [`EXACT_SWEEP_LIMIT`] scores, binned beyond.
///
/// # Errors
/// [`Error::DegenerateClass`] when no label is positive (recall is
/// undefined); `Precondition` on length mismatch, empty input, or
/// non-finite scores.
pub fn pr_curve(label: &str, scores: &[f32], labels: &[bool]) -> Result<PrCurve> {
    let mode = if scores.len() <= EXACT_SWEEP_LIMIT {
        SweepMode::Exact
    } else {
        SweepMode::Binned(BIN_COUNT)
    };
    pr_curve_with_mode(label, scores, labels, mode)
}

/// [`pr_curve`] with the sweep chosen by the caller (the automatic choice is
/// right for production; tests compare both on the same data).
pub fn pr_curve_with_mode(
    label: &str,
    scores: &[f32],
    labels: &[bool],
    mode: SweepMode,
) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Precondition("cannot sweep zero scores".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Precondition("scores must be finite".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(Error::DegenerateClass {
            label: label.to_string(),
        });
    }

    let points = match mode {
        SweepMode::Exact => exact_sweep(scores, labels, positives),
        SweepMode::Binned(bins) => binned_sweep(scores, labels, positives, bins),
    };
    Ok(PrCurve {
        points,
        mode,
        positives,
        negatives,
    })
}

/// One point per distinct score, descending: at threshold `t` a pixel is
/// predicted positive iff its score is `>= t`, so ties enter together.
fn exact_sweep(scores: &[f32], labels: &[bool], positives: usize) -> Vec<PrPoint> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: f64::from(threshold),
            precision: precision(tp, fp),
            recall: tp as f64 / positives as f64,
        });
    }
    points
}

/// Histogram-based sweep over `bins + 1` uniform thresholds `k / bins`,
/// descending from 1 to 0. Scores must be in `[0, 1]` (they are sigmoid
/// outputs); anything outside is clamped into the end bins.
fn binned_sweep(scores: &[f32], labels: &[bool], positives: usize, bins: usize) -> Vec<PrPoint> {
    let mut pos_hist = vec![0usize; bins];
    let mut neg_hist = vec![0usize; bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let bin = ((f64::from(s) * bins as f64) as usize).min(bins - 1);
        if l {
            pos_hist[bin] += 1;
        } else {
            neg_hist[bin] += 1;
        }
    }
    let mut points = Vec::with_capacity(bins + 1);
    let (mut tp, mut fp) = (0usize, 0usize);
    // Threshold k/bins admits every score in bins k..; descend from the top.
    for k in (0..=bins).rev() {
        if k < bins {
            tp += pos_hist[k];
            fp += neg_hist[k];
        }
        points.push(PrPoint {
            threshold: k as f64 / bins as f64,
            precision: precision(tp, fp),
            recall: tp as f64 / positives as f64,
        });
    }
    points
}

/// Area under the PR curve: `sum (R_n - R_{n-1}) * P_n` starting from
/// recall 0.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for p in &curve.points {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    ap
}

/// Quality numbers for one summary row.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClassEval {
    pub label: String,
    /// Output channel, or `None` for the pooled "All" row.
    pub channel: Option<usize>,
    pub average_precision: f64,
    pub curve: PrCurve,
}

/// Everything `evaluate` measures over a dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalReport {
    /// Rows in [`SUMMARY_ROWS`] order: Ball, Field, Line, Goal, Robot, All.
    pub classes: Vec<ClassEval>,
    /// AP of the pooled curve (the "All" row).
    pub micro_map: f64,
    /// Fraction of pixels whose hard decision matches the mask.
    pub pixel_accuracy: f64,
    /// Mean sigmoid-cross-entropy over the dataset.
    pub mean_loss: f64,
    pub sample_count: usize,
}

/// Streaming collector of per-pixel scores and labels.
pub struct EvalAccumulator {
    scores: Vec<Vec<f32>>,
    labels: Vec<Vec<bool>>,
    correct_pixels: usize,
    total_pixels: usize,
    samples: usize,
}

impl Default for EvalAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl EvalAccumulator {
    pub fn new() -> Self {
        EvalAccumulator {
            scores: vec![Vec::new(); CLASS_CHANNELS],
            labels: vec![Vec::new(); CLASS_CHANNELS],
            correct_pixels: 0,
            total_pixels: 0,
            samples: 0,
        }
    }

    /// Adds one image's probabilities against its targets (both
    /// `h x w x 5`).
    ///
    /// # Errors
    /// Errors on shape mismatch or wrong channel count.
    pub fn add(&mut self, probabilities: &Tensor, targets: &Tensor) -> Result<()> {
        probabilities.assert_shape(targets.shape())?;
        if probabilities.channels() != CLASS_CHANNELS {
            return Err(Error::Precondition(format!(
                "expected {CLASS_CHANNELS} channels, got {}",
                probabilities.channels()
            )));
        }
        for (probs, truth) in probabilities
            .data()
            .chunks_exact(CLASS_CHANNELS)
            .zip(targets.data().chunks_exact(CLASS_CHANNELS))
        {
            for c in 0..CLASS_CHANNELS {
                self.scores[c].push(probs[c]);
                self.labels[c].push(truth[c] == 1.0);
            }
        }
        // Hard-decision accuracy against the mask implied by the targets.
        let predicted = probabilities_to_classes(probabilities);
        for (pred, truth) in predicted
            .iter()
            .zip(targets.data().chunks_exact(CLASS_CHANNELS))
        {
            let true_class = truth
                .iter()
                .position(|&v| v == 1.0)
                .map_or(0, |c| (c + 1) as u8);
            if *pred == true_class {
                self.correct_pixels += 1;
            }
            self.total_pixels += 1;
        }
        self.samples += 1;
        Ok(())
    }

    /// Builds curves and APs for every summary row. `mean_loss` is carried
    /// through from the caller (the accumulator never saw the logits).
    pub fn finish(self, mean_loss: f64) -> Result<EvalReport> {
        if self.samples == 0 {
            return Err(Error::Precondition("nothing was evaluated".into()));
        }
        let mut classes = Vec::with_capacity(SUMMARY_ROWS.len());
        let mut micro_map = 0.0;
        for (label, channel) in SUMMARY_ROWS {
            let curve = match channel {
                Some(c) => pr_curve(label, &self.scores[c], &self.labels[c])?,
                None => {
                    let pooled_scores: Vec<f32> =
                        self.scores.iter().flatten().copied().collect();
                    let pooled_labels: Vec<bool> =
                        self.labels.iter().flatten().copied().collect();
                    pr_curve(label, &pooled_scores, &pooled_labels)?
                }
            };
            let ap = average_precision(&curve);
            if channel.is_none() {
                micro_map = ap;
            }
            classes.push(ClassEval {
                label: label.to_string(),
                channel,
                average_precision: ap,
                curve,
            });
        }
        Ok(EvalReport {
            classes,
            micro_map,
            pixel_accuracy: self.correct_pixels as f64 / self.total_pixels as f64,
            mean_loss,
            sample_count: self.samples,
        })
    }
}

/// Runs a model over a source (no augmentation, no shuffling) and measures
/// everything in one pass.
pub fn evaluate<S: SampleSource + ?Sized>(
    model: &SegModel<f32>,
    source: &S,
    batch_size: usize,
) -> Result<EvalReport> {
    use crate::dataset::{iterate_batches, EpochOptions};
    let shape = model.input_shape();
    let options = EpochOptions {
        batch_size,
        target_height: shape.height,
        target_width: shape.width,
        seed: 0,
        epoch: 0,
        shuffle: false,
    };
    let mut acc = EvalAccumulator::new();
    for batch in iterate_batches(source, options, None, None)? {
        let (inputs, targets) = batch?;
        let logits = model.forward_infer(&inputs)?;
        let probabilities = sigmoid(&logits);
        for (p, t) in probabilities.items().iter().zip(targets.items()) {
            acc.add(p, t)?;
        }
    }
    let mean_loss = mean_bce_loss(model, source, batch_size)?;
    acc.finish(mean_loss)
}

fn curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("threshold,precision,recall\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    out
}

fn summary_csv(report: &EvalReport) -> String {
    let mut out = String::from("class,average_precision,positives,negatives\n");
    for c in &report.classes {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.label, c.average_precision, c.curve.positives, c.curve.negatives
        ));
    }
    out
}

/// Renders the headline numbers (per-class AP, micro AP, accuracy, loss) as
/// pretty JSON with deterministic key order.
pub fn summary_json(report: &EvalReport) -> String {
    let classes: BTreeMap<&str, f64> = report
        .classes
        .iter()
        .map(|c| (c.label.as_str(), c.average_precision))
        .collect();
    let value = serde_json::json!({
        "average_precision": classes,
        "micro_map": report.micro_map,
        "pixel_accuracy": report.pixel_accuracy,
        "mean_loss": report.mean_loss,
        "sample_count": report.sample_count,
    });
    serde_json::to_string_pretty(&value).expect("report always serializes")
}

/// Writes `summary.csv`, `summary.json`, and one `pr_<class>.csv` per row
/// into `dir` (created if needed). Output is deterministic: identical
/// reports export byte-identical files.
pub fn export_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in &report.classes {
        let name = format!("pr_{}.csv", c.label.to_lowercase().replace(' ', "_"));
        let path = dir.join(name);
        std::fs::write(&path, curve_csv(&c.curve)).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary_csv(report)).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("summary.json");
    std::fs::write(&path, summary_json(report)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}
