//! The MW operator `M f(x) = sum_i box f(gamma^i(0), gamma^i(x))`, its
//! iterates, convergence to the limit operator, and fixed-point tests.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geometry::{group_norm_product, write_corner, CornerMask, MultilinearForm, Point};
use crate::gradient::{analytic_modulus, average_gradient, gradient_modulus, QuadratureSpec, Region, Representative};
use crate::ifs::{AffineIFS, MultiIndexMap};
use crate::increment::increment_with;
use crate::numeric::CompensatedSum;

/// Words per parallel task in [`iterate_by_words`].
const WORD_CHUNK_TARGET: u128 = 256;

/// Samples used when the modulus of continuity has to be estimated.
const MODULUS_SAMPLES: usize = 4096;

/// Largest word count used for the self-similar fit of the limit.
const LIMIT_WORD_CAP: u128 = 1 << 16;

/// Increment form: `sum_i box f(a^i, gamma^i(x))`.
pub fn apply(ifs: &AffineIFS, f: &ScalarField, x: &Point) -> Result<f64> {
    let shape = ifs.shape();
    shape.check_same(&f.shape())?;
    shape.check_same(&x.shape())?;
    let mut image = vec![0.0; shape.dim()];
    let mut buf = vec![0.0; shape.dim()];
    let mut total = CompensatedSum::new();
    for m in ifs.maps() {
        m.apply_slice(x.as_slice(), &mut image);
        total.add(increment_with(shape, m.offset().as_slice(), &image, &mut buf, |p| f.eval_slice(p)));
    }
    Ok(total.value())
}

/// Direct corner form: `sum_i sum_M (-1)^{|M|} f(gamma^i_M(x))`, where
/// `gamma^i_M` takes `a^i` on the groups in `M` and `gamma^i(x)` elsewhere.
pub fn apply_direct(ifs: &AffineIFS, f: &ScalarField, x: &Point) -> Result<f64> {
    let shape = ifs.shape();
    shape.check_same(&f.shape())?;
    shape.check_same(&x.shape())?;
    let mut image = vec![0.0; shape.dim()];
    let mut corner = vec![0.0; shape.dim()];
    let mut total = CompensatedSum::new();
    for m in ifs.maps() {
        m.apply_slice(x.as_slice(), &mut image);
        for mask in CornerMask::all(shape.r()) {
            write_corner(m.offset().as_slice(), &image, shape, mask, &mut corner);
            total.add(mask.sign() * f.eval_slice(&corner));
        }
    }
    Ok(total.value())
}

/// Memo key: coordinates with the low four mantissa bits dropped.
fn quantize(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| (v + 0.0).to_bits() >> 4).collect()
}

struct Expander<'a> {
    ifs: &'a AffineIFS,
    f: &'a ScalarField,
    memo: Vec<HashMap<Vec<u64>, f64>>,
    work: u128,
    budget: u128,
}

impl Expander<'_> {
    fn eval(&mut self, level: usize, x: &[f64]) -> Result<f64> {
        if level == 0 {
            self.charge(1)?;
            return Ok(self.f.eval_slice(x));
        }
        let key = quantize(x);
        if let Some(&v) = self.memo[level].get(&key) {
            return Ok(v);
        }
        let shape = self.ifs.shape();
        self.charge((self.ifs.len() as u128) << shape.r())?;
        let mut image = vec![0.0; shape.dim()];
        let mut corner = vec![0.0; shape.dim()];
        let mut total = CompensatedSum::new();
        for m in self.ifs.maps() {
            m.apply_slice(x, &mut image);
            for mask in CornerMask::all(shape.r()) {
                write_corner(m.offset().as_slice(), &image, shape, mask, &mut corner);
                let v = self.eval(level - 1, &corner)?;
                total.add(mask.sign() * v);
            }
        }
        let v = total.value();
        self.memo[level].insert(key, v);
        Ok(v)
    }

    fn charge(&mut self, units: u128) -> Result<()> {
        self.work += units;
        if self.work > self.budget {
            return Err(Error::BudgetExceeded {
                what: "recursive operator expansion",
                required: self.work,
                budget: self.budget,
            });
        }
        Ok(())
    }
}

/// `M^p f(x)` by `p` nested applications of the operator, memoizing every
/// intermediate level on quantized coordinates.
pub fn iterate_by_composition(ifs: &AffineIFS, f: &ScalarField, p: usize, x: &Point, budget: u128) -> Result<f64> {
    let shape = ifs.shape();
    shape.check_same(&f.shape())?;
    shape.check_same(&x.shape())?;
    let mut ex = Expander {
        ifs,
        f,
        memo: vec![HashMap::new(); p + 1],
        work: 0,
        budget,
    };
    ex.eval(p, x.as_slice())
}

/// `M^p f(x) = sum_{w in I^p} box f(gamma^w(0), gamma^w(x))` for `p >= 1`;
/// `p = 0` returns `f(x)`.
///
/// Words are split into fixed prefix chunks summed in parallel and combined
/// in lexicographic order, so the result does not depend on the worker count.
pub fn iterate_by_words(ifs: &AffineIFS, f: &ScalarField, p: usize, x: &Point, budget: u128) -> Result<f64> {
    let shape = ifs.shape();
    shape.check_same(&f.shape())?;
    shape.check_same(&x.shape())?;
    ifs.word_count(p, budget)?;
    if p == 0 {
        return Ok(f.eval(x));
    }
    let mut prefix_len = 0;
    while prefix_len < p && (ifs.len() as u128).pow(prefix_len as u32) < WORD_CHUNK_TARGET {
        prefix_len += 1;
    }
    let prefixes: Vec<MultiIndexMap> = ifs.enumerate_words(prefix_len, u128::MAX)?.collect();
    let x = x.as_slice();
    let chunks: Vec<CompensatedSum> = prefixes
        .par_iter()
        .map(|prefix| {
            let mut image = vec![0.0; shape.dim()];
            let mut corner = vec![0.0; shape.dim()];
            let mut sum = CompensatedSum::new();
            ifs.visit_words(&prefix.alpha, prefix.anchor.as_slice(), p - prefix_len, |alpha, anchor| {
                crate::ifs::apply_affine(alpha, anchor, x, &mut image);
                for mask in CornerMask::all(shape.r()) {
                    write_corner(anchor, &image, shape, mask, &mut corner);
                    sum.add(mask.sign() * f.eval_slice(&corner));
                }
            });
            sum
        })
        .collect();
    let mut total = CompensatedSum::new();
    for c in &chunks {
        total.merge(c);
    }
    Ok(total.value())
}

/// Where an error bound's modulus of continuity came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    /// Gradient envelope of the field: a guaranteed upper bound.
    Analytic,
    /// Sampled modulus: a lower estimate of the true bound.
    Empirical,
}

/// `2 ||x||^N omega_T(grad_N f, r_x q^p)` with `r_x = max(diam T, ||x||)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBound {
    pub value: f64,
    pub source: BoundSource,
}

/// Distance scale `r_x q^p` at which the gradient modulus is evaluated.
pub fn bound_radius(ifs: &AffineIFS, x: &Point, p: usize) -> f64 {
    ifs.tile().diameter().max(x.norm()) * ifs.q().powi(p as i32)
}

/// Modulus of `grad_N f` over the tile at scale `delta`: analytic when the
/// field has an envelope, sampled otherwise.
pub fn tile_modulus(ifs: &AffineIFS, f: &ScalarField, delta: f64, seed: u64) -> Result<(f64, BoundSource)> {
    let tile = ifs.tile().bounding_box();
    if delta <= 0.0 {
        return Ok((0.0, BoundSource::Analytic));
    }
    match analytic_modulus(f, tile, delta) {
        Some(w) => Ok((w, BoundSource::Analytic)),
        None => Ok((gradient_modulus(f, tile, delta, MODULUS_SAMPLES, seed)?, BoundSource::Empirical)),
    }
}

/// The convergence bound at depth `p` and point `x`.
pub fn error_bound(ifs: &AffineIFS, f: &ScalarField, x: &Point, p: usize) -> Result<ErrorBound> {
    let (w, source) = tile_modulus(ifs, f, bound_radius(ifs, x, p), 0)?;
    Ok(ErrorBound {
        value: 2.0 * group_norm_product(x) * w,
        source,
    })
}

/// One evaluated point of an iterate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IteratePoint {
    pub x: Vec<f64>,
    pub value: f64,
    pub bound: Option<ErrorBound>,
}

/// `M^p f` on a list of points, with the convergence bound per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateResult {
    pub p: usize,
    pub points: Vec<IteratePoint>,
    pub evaluations_used: u128,
}

/// Evaluates `M^p f` by word sums at every point of `xs`. Bounds are
/// omitted when the field cannot be differentiated.
pub fn iterate(ifs: &AffineIFS, f: &ScalarField, p: usize, xs: &[Point], budget: u128) -> Result<IterateResult> {
    let per_point = ifs.word_count(p, budget)? << ifs.shape().r();
    let total = per_point.saturating_mul(xs.len() as u128);
    if total > budget {
        return Err(Error::BudgetExceeded {
            what: "iterate evaluations",
            required: total,
            budget,
        });
    }
    let points = xs
        .iter()
        .map(|x| {
            Ok(IteratePoint {
                x: x.as_slice().to_vec(),
                value: iterate_by_words(ifs, f, p, x, budget)?,
                bound: error_bound(ifs, f, x, p).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IterateResult {
        p,
        points,
        evaluations_used: total,
    })
}

/// Deepest self-similar level whose word count stays within `cap`.
pub fn default_fit_depth(ifs: &AffineIFS, cap: u128) -> usize {
    let mut d = 0;
    while d < 24 && ifs.word_count(d + 1, cap).is_ok() {
        d += 1;
    }
    d
}

/// Outcome of [`converge`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeReport {
    /// `M^p f(x)` at the stopping depth.
    pub value: f64,
    pub p_used: usize,
    /// `|M^{p+1} f(x) - M^p f(x)|` at the stopping depth.
    pub achieved_delta: f64,
    pub converged: bool,
    pub bound: Option<ErrorBound>,
    /// `L f(x)` from the self-similar average gradient.
    pub limit_value: f64,
    pub limit_depth: usize,
    /// Bound on the quadrature error of `limit_value`.
    pub quadrature_tolerance: Option<f64>,
    /// `|value - limit_value| <= bound + quadrature_tolerance`, when both are known.
    pub certified: Option<bool>,
}

/// Iterates until two consecutive iterates differ by less than `tol`.
///
/// The first `p` with `|M^{p+1} f(x) - M^p f(x)| < tol` is reported. If
/// `p_max` is reached first, the report carries `converged = false`.
/// Running out of word budget before either is an error.
pub fn converge(ifs: &AffineIFS, f: &ScalarField, x: &Point, tol: f64, p_max: usize, budget: u128) -> Result<ConvergeReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut prev = iterate_by_words(ifs, f, 0, x, budget)?;
    let mut last_delta = f64::NAN;
    let mut p = 0;
    let (value, achieved_delta, converged) = loop {
        if p >= p_max {
            break (prev, last_delta, false);
        }
        let next = iterate_by_words(ifs, f, p + 1, x, budget)?;
        let delta = (next - prev).abs();
        if delta < tol {
            break (prev, delta, true);
        }
        last_delta = delta;
        prev = next;
        p += 1;
    };

    let limit_depth = default_fit_depth(ifs, budget.min(LIMIT_WORD_CAP));
    let quad = QuadratureSpec::SelfSimilar {
        depth: limit_depth,
        representative: Representative::Centroid,
    };
    let lambda = average_gradient(f, Region::Ifs(ifs), quad)?;
    let limit_value = lambda.eval(x)?;
    let bound = error_bound(ifs, f, x, p).ok();
    let quadrature_tolerance = tile_modulus(ifs, f, ifs.cell_diameter_bound(limit_depth), 1)
        .ok()
        .map(|(w, _)| group_norm_product(x) * w);
    let certified = match (bound, quadrature_tolerance) {
        (Some(b), Some(q)) => Some((value - limit_value).abs() <= b.value + q + 1e-12),
        _ => None,
    };
    Ok(ConvergeReport {
        value,
        p_used: p,
        achieved_delta,
        converged,
        bound,
        limit_value,
        limit_depth,
        quadrature_tolerance,
        certified,
    })
}

/// Outcome of [`check_fixed_point`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub is_fixed: bool,
    pub max_residual: f64,
    pub argmax: Vec<f64>,
    /// Fitted coefficient form, present when the field passed.
    pub lambda: Option<MultilinearForm>,
    /// `max |f(x) - lambda x^N|` over the samples, present with `lambda`.
    pub fit_residual: Option<f64>,
    pub fit_depth: usize,
}

/// `max |M f(x) - f(x)|` over `samples`; on success also fits the
/// multilinear form through the self-similar average gradient at depth
/// `fit_depth` (defaulting to the deepest level within a word cap).
pub fn check_fixed_point(
    ifs: &AffineIFS,
    f: &ScalarField,
    samples: &[Point],
    tol: f64,
    fit_depth: Option<usize>,
) -> Result<FixedPointReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("fixed-point check needs at least one sample".into()));
    }
    let residuals: Vec<f64> = samples
        .par_iter()
        .map(|x| Ok((apply(ifs, f, x)? - f.eval(x)).abs()))
        .collect::<Result<_>>()?;
    let (idx, max_residual) = residuals
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let is_fixed = max_residual <= tol;
    let fit_depth = fit_depth.unwrap_or_else(|| default_fit_depth(ifs, 4096));
    let (lambda, fit_residual) = if is_fixed {
        let quad = QuadratureSpec::SelfSimilar {
            depth: fit_depth,
            representative: Representative::Centroid,
        };
        let lambda = average_gradient(f, Region::Ifs(ifs), quad)?;
        let fit = samples
            .iter()
            .map(|x| Ok((f.eval(x) - lambda.eval(x)?).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        (Some(lambda), Some(fit))
    } else {
        (None, None)
    };
    Ok(FixedPointReport {
        is_fixed,
        max_residual,
        argmax: samples[idx].as_slice().to_vec(),
        lambda,
        fit_residual,
        fit_depth,
    })
}
