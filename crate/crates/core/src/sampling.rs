//! Seeded sampling helpers. Every randomized routine takes an explicit seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::AxisBox;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point in a box (coordinates collapse to `lo` on degenerate axes).
pub(crate) fn in_box<R: Rng>(rng: &mut R, region: &AxisBox) -> Vec<f64> {
    let lo = region.lo().as_slice();
    let hi = region.hi().as_slice();
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| if b > a { rng.gen_range(a..b) } else { a })
        .collect()
}

/// Uniform point in the open Euclidean ball of radius `radius` around `center`.
pub(crate) fn in_ball<R: Rng>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let dim = center.len();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm2: f64 = v.iter().map(|a| a * a).sum();
        if norm2 < 1.0 && norm2 > 0.0 {
            return center.iter().zip(&v).map(|(c, d)| c + radius * d).collect();
        }
    }
}
