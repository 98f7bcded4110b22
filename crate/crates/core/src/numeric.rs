//! Small numerical helpers shared across modules.

use std::ops::AddAssign;

/// Neumaier-compensated running sum.
///
/// The corner sums behind every increment alternate in sign and cancel
/// heavily for smooth fields on small cells; the compensation term keeps
/// the low-order bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Merges another partial sum into this one.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl AddAssign<f64> for CompensatedSum {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator of values.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive (`n >= 2`), or `[lo]` when `n == 1`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|j| {
                if j == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * j as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Integer power with overflow reported as `None`.
pub fn checked_pow(base: usize, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensation_recovers_lost_bits() {
        let values = [1.0, 1e100, 1.0, -1e100];
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 0.0);
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e-3 + 1.0).collect();
        let whole = compensated_sum(xs.iter().copied());
        let mut a: CompensatedSum = xs[..400].iter().copied().collect();
        let b: CompensatedSum = xs[400..].iter().copied().collect();
        a.merge(&b);
        assert!((a.value() - whole).abs() < 1e-12);
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(0.0, 1.0, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[5], 0.5);
        assert_eq!(g[10], 1.0);
    }

    #[test]
    fn checked_pow_overflows_to_none() {
        assert_eq!(checked_pow(3, 4), Some(81));
        assert_eq!(checked_pow(2, 0), Some(1));
        assert!(checked_pow(1 << 20, 10).is_none());
    }
}
