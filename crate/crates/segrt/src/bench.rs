//! Inference latency measurement across a ladder of input resolutions, plus
//! a least-squares check that runtime scales linearly with pixel count.
//!
//! Each resolution is timed with a freshly seeded, batch-norm-folded model
//! on a fixed random input. Timings are wall-clock per forward pass;
//! medians are the headline number since they shrug off scheduler noise.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SegModel;
use crate::tensor::{Batch, Shape, Tensor};

/// The measured resolution ladder as `(width, height, reference_ms)`.
///
/// The reference column is the published single-core timing for this
/// architecture on a Raspberry Pi 3-class CPU; it is carried along in
/// reports for context, not compared against (desktop machines are far
/// faster).
pub const RESOLUTION_LADDER: [(usize, usize, f64); 6] = [
    (40, 32, 1.6),
    (80, 64, 6.7),
    (108, 80, 11.2),
    (120, 88, 14.0),
    (160, 120, 27.3),
    (320, 240, 116.0),
];

/// Timing summary for one resolution.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct BenchResult {
    pub width: usize,
    pub height: usize,
    pub pixels: usize,
    pub iterations: usize,
    pub median_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

fn summarize(samples_ms: &[f64]) -> (f64, f64, f64) {
    let mut sorted = samples_ms.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let p95 = sorted[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1];
    (median, mean, p95)
}

/// Times folded-model inference at one resolution: `warmup` untimed passes,
/// then `iterations` timed ones over the same input.
///
/// # Errors
/// Errors when `iterations` is zero or the resolution is not a positive
/// multiple of 4.
pub fn time_inference(
    height: usize,
    width: usize,
    iterations: usize,
    warmup: usize,
    seed: u64,
) -> Result<BenchResult> {
    if iterations == 0 {
        return Err(Error::Precondition("need at least one iteration".into()));
    }
    let mut model = SegModel::seeded(height, width, seed)?;
    model.set_mode(crate::model::Mode::Infer);
    let model = model.prepare_inference()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = Tensor::zeros(Shape::new(height, width, 3));
    for v in input.data_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    let batch = Batch::single(input);

    for _ in 0..warmup {
        std::hint::black_box(model.forward_infer(&batch)?);
    }
    let mut samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        std::hint::black_box(model.forward_infer(&batch)?);
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let (median_ms, mean_ms, p95_ms) = summarize(&samples);
    Ok(BenchResult {
        width,
        height,
        pixels: height * width,
        iterations,
        median_ms,
        mean_ms,
        p95_ms,
    })
}

/// Ordinary least-squares line through `(x, y)` points.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `y = slope * x + intercept` and reports the coefficient of
/// determination.
///
/// # Errors
/// Errors on fewer than two points or zero variance in `x`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::Precondition(
            "need at least two points to fit a line".into(),
        ));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::Precondition(
            "cannot fit a line to constant x".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let predicted = slope * x + intercept;
            (y - predicted) * (y - predicted)
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0 // a flat line fits constant data perfectly
    } else {
        1.0 - ss_res / syy
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// One ladder row: a measurement plus the published reference timing.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LadderRow {
    #[serde(flatten)]
    pub result: BenchResult,
    pub reference_ms: f64,
}

/// Full benchmark output: every ladder row plus the ms-vs-pixels fit.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScalingReport {
    pub host: String,
    pub rows: Vec<LadderRow>,
    pub fit: LinearFit,
}

/// Describes the machine the benchmark ran on (best effort).
pub fn host_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|name| name.trim().to_string())
        })
        .unwrap_or_else(|| "unknown CPU".to_string());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!("{cpu} ({threads} threads)")
}

/// Times every resolution in [`RESOLUTION_LADDER`] and fits median
/// milliseconds against pixel count.
pub fn scaling_report(iterations: usize, warmup: usize, seed: u64) -> Result<ScalingReport> {
    let mut rows = Vec::with_capacity(RESOLUTION_LADDER.len());
    for (width, height, reference_ms) in RESOLUTION_LADDER {
        let result = time_inference(height, width, iterations, warmup, seed)?;
        rows.push(LadderRow {
            result,
            reference_ms,
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.result.pixels as f64, r.result.median_ms))
        .collect();
    let fit = fit_line(&points)?;
    Ok(ScalingReport {
        host: host_descriptor(),
        rows,
        fit,
    })
}

/// Renders a report as CSV with the host and fit in comment lines.
pub fn scaling_csv(report: &ScalingReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# host: {}\n", report.host));
    out.push_str(&format!(
        "# fit: ms = {:.6e} * pixels + {:.6e} (r_squared = {:.6})\n",
        report.fit.slope, report.fit.intercept, report.fit.r_squared
    ));
    out.push_str("width,height,pixels,median_ms,mean_ms,p95_ms,reference_ms\n");
    for row in &report.rows {
        let r = &row.result;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.width, r.height, r.pixels, r.median_ms, r.mean_ms, r.p95_ms, row.reference_ms
        ));
    }
    out
}
