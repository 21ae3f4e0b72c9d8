//! Seeded 2D gradient noise for cloud-like brightness overlays.
//!
//! Classic lattice gradient noise: a shuffled permutation table hashes each
//! integer lattice point to one of eight unit-ish gradients, and values
//! between lattice points are blended with a quintic fade. Output is smooth,
//! zero at every lattice point, and scaled to lie in `[-1, 1]`.

use rand::seq::SliceRandom;
use rand::Rng;

/// Eight evenly spread gradient directions.
const GRADIENTS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (-1.0, 0.0),
    (0.0, 1.0),
    (0.0, -1.0),
    (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
    (-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
];

/// A seeded noise field; sampling is pure.
pub struct GradientNoise {
    perm: [u8; 512],
}

impl GradientNoise {
    /// Builds the permutation table from `rng` (so the field is fully
    /// determined by the caller's seed).
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut table: Vec<u8> = (0..=255).collect();
        table.shuffle(rng);
        let mut perm = [0u8; 512];
        for i in 0..512 {
            perm[i] = table[i % 256];
        }
        GradientNoise { perm }
    }

    fn gradient(&self, xi: i64, yi: i64) -> (f64, f64) {
        let a = self.perm[(xi & 255) as usize] as usize;
        let b = self.perm[a + (yi & 255) as usize] as usize;
        GRADIENTS[b & 7]
    }

    /// Noise value at `(x, y)`, in `[-1, 1]`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let (xf, yf) = (x - x0, y - y0);
        let (xi, yi) = (x0 as i64, y0 as i64);

        let dot = |gx: i64, gy: i64, dx: f64, dy: f64| {
            let (vx, vy) = self.gradient(gx, gy);
            vx * dx + vy * dy
        };
        let n00 = dot(xi, yi, xf, yf);
        let n10 = dot(xi + 1, yi, xf - 1.0, yf);
        let n01 = dot(xi, yi + 1, xf, yf - 1.0);
        let n11 = dot(xi + 1, yi + 1, xf - 1.0, yf - 1.0);

        let fade = |t: f64| t * t * t * (t * (t * 6.0 - 15.0) + 10.0);
        let (u, v) = (fade(xf), fade(yf));
        let top = n00 + u * (n10 - n00);
        let bottom = n01 + u * (n11 - n01);
        let raw = top + v * (bottom - top);
        // Unit gradients bound the raw value by sqrt(2)/2.
        (raw * std::f64::consts::SQRT_2).clamp(-1.0, 1.0)
    }
}
