//! Simple polygons with even-odd pixel-center coverage, used for sun
//! patches.
//!
//! A pixel `(y, x)` is covered when its center `(x + 0.5, y + 0.5)` is
//! inside the polygon under the even-odd rule. The scanline rasterizer and
//! the point-in-polygon test share one crossing convention (half-open in
//! both axes), so they agree exactly — the tests check them against each
//! other on random polygons.

use rand::Rng;

use crate::error::{Error, Result};

/// A polygon given by its vertices in order (closed implicitly).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    /// # Errors
    /// Errors with fewer than three vertices or any non-finite coordinate.
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Precondition(format!(
                "a polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Precondition(
                "polygon vertices must be finite".into(),
            ));
        }
        Ok(Polygon { vertices })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Star polygon around `(cx, cy)`: `vertex_count` rays at sorted random
    /// angles with radii drawn from `radius_range`. Always simple
    /// (non-self-intersecting).
    pub fn random_star(
        rng: &mut impl Rng,
        cx: f64,
        cy: f64,
        radius_range: (f64, f64),
        vertex_count: usize,
    ) -> Result<Self> {
        if vertex_count < 3 {
            return Err(Error::Precondition(format!(
                "a polygon needs at least 3 vertices, got {vertex_count}"
            )));
        }
        let (r_lo, r_hi) = radius_range;
        if !(0.0 < r_lo && r_lo <= r_hi) {
            return Err(Error::Precondition(format!(
                "star radius range must satisfy 0 < lo <= hi, got ({r_lo}, {r_hi})"
            )));
        }
        let mut angles: Vec<f64> = (0..vertex_count)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let vertices = angles
            .into_iter()
            .map(|theta| {
                let r = rng.gen_range(r_lo..=r_hi);
                (cx + r * theta.cos(), cy + r * theta.sin())
            })
            .collect();
        Polygon::new(vertices)
    }

    fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd containment of an arbitrary point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ((x1, y1), (x2, y2)) in self.edges() {
            if (y1 <= y) != (y2 <= y) {
                let cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
                if x < cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Visits every covered pixel `(y, x)` inside a `height x width` grid by
    /// horizontal scanlines; exactly the pixels whose centers satisfy
    /// [`Self::contains`].
    pub fn covered_pixels(&self, height: usize, width: usize, mut visit: impl FnMut(usize, usize)) {
        let min_y = self
            .vertices
            .iter()
            .map(|v| v.1)
            .fold(f64::INFINITY, f64::min);
        let max_y = self
            .vertices
            .iter()
            .map(|v| v.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let y_start = (min_y - 0.5).ceil().max(0.0) as usize;
        let y_end = ((max_y - 0.5).floor() as i64 + 1).clamp(0, height as i64) as usize;

        let mut crossings: Vec<f64> = Vec::with_capacity(self.vertices.len());
        for y in y_start..y_end {
            let yc = y as f64 + 0.5;
            crossings.clear();
            for ((x1, y1), (x2, y2)) in self.edges() {
                if (y1 <= yc) != (y2 <= yc) {
                    crossings.push(x1 + (yc - y1) * (x2 - x1) / (y2 - y1));
                }
            }
            crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in crossings.chunks_exact(2) {
                // Centers in [pair[0], pair[1]): x + 0.5 >= lo and < hi.
                let x_lo = (pair[0] - 0.5).ceil().max(0.0) as usize;
                let x_hi = ((pair[1] - 0.5).ceil() as i64).clamp(0, width as i64) as usize;
                for x in x_lo..x_hi {
                    visit(y, x);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn brute_force(poly: &Polygon, h: usize, w: usize) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        for y in 0..h {
            for x in 0..w {
                if poly.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    set.insert((y, x));
                }
            }
        }
        set
    }

    fn scanline(poly: &Polygon, h: usize, w: usize) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        poly.covered_pixels(h, w, |y, x| {
            assert!(set.insert((y, x)), "pixel visited twice: ({y}, {x})");
        });
        set
    }

    #[test]
    fn needs_three_vertices() {
        assert!(Polygon::new(vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(Polygon::new(vec![(0.0, 0.0), (1.0, 1.0), (f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn axis_aligned_square_covers_expected_pixels() {
        // Square from (1, 1) to (4, 3): centers at x in {1.5, 2.5, 3.5},
        // y in {1.5, 2.5}.
        let poly =
            Polygon::new(vec![(1.0, 1.0), (4.0, 1.0), (4.0, 3.0), (1.0, 3.0)]).unwrap();
        let got = scanline(&poly, 6, 6);
        let want: BTreeSet<_> = [(1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)]
            .into_iter()
            .collect();
        assert_eq!(got, want);
        assert_eq!(got, brute_force(&poly, 6, 6));
    }

    #[test]
    fn triangle_covers_half_the_square_roughly() {
        let poly = Polygon::new(vec![(0.0, 0.0), (20.0, 0.0), (0.0, 20.0)]).unwrap();
        let count = scanline(&poly, 20, 20).len();
        assert!((170..=230).contains(&count), "triangle area ~200, got {count}");
    }

    #[test]
    fn scanline_matches_brute_force_on_random_stars() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for i in 0..40 {
            let cx = rng.gen_range(-5.0..40.0);
            let cy = rng.gen_range(-5.0..30.0);
            let vertices = rng.gen_range(3..=8);
            let poly = Polygon::random_star(&mut rng, cx, cy, (1.0, 12.0), vertices).unwrap();
            assert_eq!(
                scanline(&poly, 28, 36),
                brute_force(&poly, 28, 36),
                "mismatch on polygon {i}: {poly:?}"
            );
        }
    }

    #[test]
    fn concave_self_intersecting_shape_uses_even_odd_rule() {
        // A bowtie: the crossing region is covered/uncovered by even-odd.
        let poly =
            Polygon::new(vec![(0.0, 0.0), (10.0, 8.0), (10.0, 0.0), (0.0, 8.0)]).unwrap();
        assert_eq!(scanline(&poly, 10, 12), brute_force(&poly, 10, 12));
    }
}
