//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use mwcalc::fields::{Monomial, Polynomial};
use mwcalc::{IndexShape, Point, ScalarField};
use rand::Rng;

pub fn shape(r: usize, s: usize) -> IndexShape {
    IndexShape::new(r, s).unwrap()
}

pub fn point(sh: IndexShape, v: &[f64]) -> Point {
    Point::new(sh, v.to_vec()).unwrap()
}

pub fn random_point<R: Rng>(rng: &mut R, sh: IndexShape, lo: f64, hi: f64) -> Point {
    let v: Vec<f64> = (0..sh.dim()).map(|_| rng.gen_range(lo..hi)).collect();
    point(sh, &v)
}

/// Corner sum written out independently of the library's mask machinery.
pub fn corner_sum(f: impl Fn(&[f64]) -> f64, sh: IndexShape, x: &[f64], y: &[f64]) -> f64 {
    let (r, s) = (sh.r(), sh.s());
    let mut total = 0.0;
    for mask in 0u32..(1 << r) {
        let mut corner = y.to_vec();
        for n in 0..r {
            if mask >> n & 1 == 1 {
                corner[n * s..(n + 1) * s].copy_from_slice(&x[n * s..(n + 1) * s]);
            }
        }
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * f(&corner);
    }
    total
}

/// Random polynomial with `terms` monomials of per-coordinate degree at most `max_deg`.
pub fn random_polynomial<R: Rng>(rng: &mut R, sh: IndexShape, terms: usize, max_deg: u32) -> Vec<Monomial> {
    (0..terms)
        .map(|_| Monomial {
            coeff: rng.gen_range(-1.0..1.0),
            exponents: (0..sh.dim()).map(|_| rng.gen_range(0..=max_deg)).collect(),
        })
        .collect()
}

pub fn poly_field(sh: IndexShape, terms: Vec<Monomial>) -> ScalarField {
    Polynomial::new(sh, terms).unwrap().into_field()
}

/// Evaluates monomials directly, for oracles that must not go through the field.
pub fn eval_terms(terms: &[Monomial], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| t.exponents.iter().zip(x).fold(t.coeff, |acc, (&e, &v)| acc * v.powi(e as i32)))
        .sum()
}

/// Grid of `n` nodes per axis over `[lo, hi]^dim`, first axis slowest.
pub fn grid(sh: IndexShape, n: usize, lo: f64, hi: f64) -> Vec<Point> {
    let dim = sh.dim();
    let axis: Vec<f64> = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
    let total = n.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut v = vec![0.0; dim];
            for l in (0..dim).rev() {
                v[l] = axis[idx % n];
                idx /= n;
            }
            point(sh, &v)
        })
        .collect()
}
