//! Times folded-model inference across the resolution ladder and fits
//! milliseconds against pixel count — segmentation cost here is linear in
//! resolution.
//!
//! ```text
//! cargo run --release --example latency_ladder
//! ```

use segrt::bench::{scaling_csv, scaling_report};
use segrt::Result;

fn main() -> Result<()> {
    let report = scaling_report(9, 2, 0)?;
    print!("{}", scaling_csv(&report));
    println!();
    println!(
        "fit: ms = {:.3e} * pixels + {:.3}  (R^2 = {:.4})",
        report.fit.slope, report.fit.intercept, report.fit.r_squared
    );
    println!(
        "projected 640x480 frame: {:.1} ms",
        report.fit.slope * (640.0 * 480.0) + report.fit.intercept
    );
    Ok(())
}
