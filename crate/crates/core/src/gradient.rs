//! Mixed partials, the N-gradient, its average over a tile, the limit
//! operator, and the modulus of continuity of a vector field.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{make_multilinear, Picks, ScalarField};
use crate::geometry::{AxisBox, BoxKind, IndexShape, MultilinearForm, Point};
use crate::ifs::{AffineIFS, MultiIndexMap, DEFAULT_BUDGET};
use crate::increment::increment;
use crate::numeric::{checked_pow, CompensatedSum};
use crate::sampling;

/// Largest number of differentiated coordinates handled by finite differences.
pub const MAX_FINITE_DIFFERENCE_ORDER: usize = 3;

/// Nodes summed per parallel task in tensor quadrature.
const QUADRATURE_CHUNK: usize = 1024;

/// Base step of the nested stencil, indexed by the number of differentiated
/// coordinates. Scaled by `max(1, |coordinate|)`.
fn base_step(order: usize) -> f64 {
    match order {
        0 | 1 => 1e-3,
        2 => 2e-3,
        _ => 5e-3,
    }
}

/// Mixed partial selected by `picks`: exact if the field carries one,
/// otherwise nested fourth-order central differences.
pub fn partial(f: &ScalarField, picks: &Picks, x: &[f64]) -> Result<f64> {
    let shape = f.shape();
    if picks.len() != shape.r() {
        return Err(Error::LengthMismatch {
            expected: shape.r(),
            got: picks.len(),
        });
    }
    if x.len() != shape.dim() {
        return Err(Error::LengthMismatch {
            expected: shape.dim(),
            got: x.len(),
        });
    }
    if let Some(k) = picks.iter().flatten().find(|&&k| k >= shape.s()) {
        return Err(Error::IndexOutOfRange {
            what: "coordinate",
            index: *k,
            limit: shape.s(),
        });
    }
    if let Some(v) = f.exact_partial(picks, x) {
        return Ok(v);
    }
    let coords: Vec<usize> = picks
        .iter()
        .enumerate()
        .filter_map(|(n, p)| p.map(|k| n * shape.s() + k))
        .collect();
    if coords.len() > MAX_FINITE_DIFFERENCE_ORDER {
        return Err(Error::DifferentiationUnsupported { order: coords.len() });
    }
    let h = base_step(coords.len());
    let mut buf = x.to_vec();
    Ok(nested_difference(f, &coords, h, &mut buf))
}

/// Five-point central stencil applied once per coordinate in `coords`.
fn nested_difference(f: &ScalarField, coords: &[usize], h: f64, buf: &mut [f64]) -> f64 {
    let Some((&l, rest)) = coords.split_first() else {
        return f.eval_slice(buf);
    };
    let centre = buf[l];
    let step = h * centre.abs().max(1.0);
    let at = |offset: f64, buf: &mut [f64]| {
        buf[l] = centre + offset * step;
        nested_difference(f, rest, h, buf)
    };
    let value = (-at(2.0, buf) + 8.0 * at(1.0, buf) - 8.0 * at(-1.0, buf) + at(-2.0, buf)) / (12.0 * step);
    buf[l] = centre;
    value
}

/// `d_k f(x)`: the mixed partial picking coordinate `k_n` in each group `n`.
pub fn mixed_partial(f: &ScalarField, k: &[usize], x: &Point) -> Result<f64> {
    f.shape().check_same(&x.shape())?;
    let picks: Vec<Option<usize>> = k.iter().map(|&kn| Some(kn)).collect();
    partial(f, &picks, x.as_slice())
}

/// `grad_N f(x)`: all `s^r` mixed partials in canonical multi-index order.
pub fn n_gradient(f: &ScalarField, x: &Point) -> Result<MultilinearForm> {
    f.shape().check_same(&x.shape())?;
    let coeffs = n_gradient_slice(f, x.as_slice())?;
    Ok(MultilinearForm::from_raw(f.shape(), coeffs))
}

pub(crate) fn n_gradient_slice(f: &ScalarField, x: &[f64]) -> Result<Vec<f64>> {
    let mut picks: Vec<Option<usize>> = vec![None; f.shape().r()];
    f.shape()
        .multi_indices()
        .map(|k| {
            for (p, kn) in picks.iter_mut().zip(&k) {
                *p = Some(*kn);
            }
            partial(f, &picks, x)
        })
        .collect()
}

/// Point used to sample each cell in self-similar quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representative {
    /// `a^w = gamma^w(0)`.
    #[default]
    Anchor,
    /// `gamma^w(c)` with `c` the centroid of the tile.
    Centroid,
}

/// How the integral of `grad_N f` over a tile is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Midpoint rule on `points_per_axis` cells along every coordinate of a box.
    TensorGrid { points_per_axis: usize },
    /// `sum_{w in I^depth} beta^w grad_N f(rep(T^w))`.
    SelfSimilar {
        depth: usize,
        #[serde(default)]
        representative: Representative,
    },
}

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        match self {
            QuadratureSpec::TensorGrid { points_per_axis } if *points_per_axis < 2 => Err(Error::InvalidArgument(
                format!("tensor grid needs at least 2 points per axis, got {points_per_axis}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Integration domain: a plain box or the tile of an IFS.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Box(&'a AxisBox),
    Ifs(&'a AffineIFS),
}

impl Region<'_> {
    fn volume(&self) -> f64 {
        match self {
            Region::Box(b) => b.volume(),
            Region::Ifs(ifs) => ifs.tile().volume(),
        }
    }

    fn shape(&self) -> IndexShape {
        match self {
            Region::Box(b) => b.shape(),
            Region::Ifs(ifs) => ifs.shape(),
        }
    }
}

/// `int_T grad_N f dmu`.
pub fn gradient_increment(f: &ScalarField, region: Region<'_>, quad: QuadratureSpec) -> Result<MultilinearForm> {
    let mean = quadrature_mean(f, region, quad)?;
    Ok(mean.scaled(region.volume()))
}

/// `(1 / mu(T)) int_T grad_N f dmu`.
pub fn average_gradient(f: &ScalarField, region: Region<'_>, quad: QuadratureSpec) -> Result<MultilinearForm> {
    if !(region.volume() > 0.0) {
        return Err(Error::ZeroMeasure);
    }
    quadrature_mean(f, region, quad)
}

/// The multilinear field `x -> avg_grad_N f(T) x^N`.
pub fn limit_operator(f: &ScalarField, region: Region<'_>, quad: QuadratureSpec) -> Result<ScalarField> {
    Ok(make_multilinear(&average_gradient(f, region, quad)?))
}

/// Mean of `grad_N f` under the quadrature rule (weights summing to one).
fn quadrature_mean(f: &ScalarField, region: Region<'_>, quad: QuadratureSpec) -> Result<MultilinearForm> {
    f.shape().check_same(&region.shape())?;
    quad.validate()?;
    match quad {
        QuadratureSpec::TensorGrid { points_per_axis } => {
            let bx = match region {
                Region::Box(b) => b,
                Region::Ifs(ifs) => ifs.tile().as_box().ok_or(Error::NonBoxTile)?,
            };
            tensor_mean(f, bx, points_per_axis)
        }
        QuadratureSpec::SelfSimilar { depth, representative } => {
            let Region::Ifs(ifs) = region else {
                return Err(Error::InvalidArgument(
                    "self-similar quadrature needs an IFS tile".into(),
                ));
            };
            self_similar_mean(f, ifs, depth, representative)
        }
    }
}

fn tensor_mean(f: &ScalarField, bx: &AxisBox, n: usize) -> Result<MultilinearForm> {
    let shape = f.shape();
    let dim = shape.dim();
    let nodes = checked_pow(n, dim).filter(|&c| c <= DEFAULT_BUDGET).ok_or(Error::BudgetExceeded {
        what: "quadrature nodes",
        required: checked_pow(n, dim).unwrap_or(u128::MAX),
        budget: DEFAULT_BUDGET,
    })? as usize;
    // fail early on unsupported differentiation
    n_gradient_slice(f, bx.center().as_slice())?;

    let lo = bx.lo().as_slice().to_vec();
    let width: Vec<f64> = bx
        .hi()
        .as_slice()
        .iter()
        .zip(&lo)
        .map(|(h, l)| (h - l) / n as f64)
        .collect();
    let width_ref = &width;
    let lo_ref = &lo;
    let count = shape.multi_index_count();
    let chunks: Vec<Vec<CompensatedSum>> = (0..nodes.div_ceil(QUADRATURE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![CompensatedSum::new(); count];
            let mut x = vec![0.0; dim];
            for node in (c * QUADRATURE_CHUNK)..((c + 1) * QUADRATURE_CHUNK).min(nodes) {
                let mut rest = node;
                for l in (0..dim).rev() {
                    let j = rest % n;
                    rest /= n;
                    x[l] = lo_ref[l] + (j as f64 + 0.5) * width_ref[l];
                }
                let g = n_gradient_slice(f, &x).expect("checked at the centre");
                for (s, v) in sums.iter_mut().zip(g) {
                    s.add(v);
                }
            }
            sums
        })
        .collect();
    let mut total = vec![CompensatedSum::new(); count];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    let coeffs = total.iter().map(|s| s.value() / nodes as f64).collect();
    Ok(MultilinearForm::from_raw(shape, coeffs))
}

fn self_similar_mean(f: &ScalarField, ifs: &AffineIFS, depth: usize, rep: Representative) -> Result<MultilinearForm> {
    ifs.word_count(depth, DEFAULT_BUDGET)?;
    let shape = f.shape();
    let base = match rep {
        Representative::Anchor => vec![0.0; shape.dim()],
        Representative::Centroid => ifs.tile_centroid().into_values(),
    };
    n_gradient_slice(f, &base)?;
    let count = shape.multi_index_count();
    let mut sums = vec![CompensatedSum::new(); count];
    let mut node = vec![0.0; shape.dim()];
    let id = MultiIndexMap::identity(shape);
    let mut failure = None;
    ifs.visit_words(&id.alpha, id.anchor.as_slice(), depth, |alpha, anchor| {
        if failure.is_some() {
            return;
        }
        crate::ifs::apply_affine(alpha, anchor, &base, &mut node);
        let weight = crate::ifs::volume_ratio(alpha, shape.s());
        match n_gradient_slice(f, &node) {
            Ok(g) => {
                for (s, v) in sums.iter_mut().zip(g) {
                    s.add(weight * v);
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let total_weight = ifs.beta_sum().powi(depth as i32);
    let coeffs = sums.iter().map(|s| s.value() / total_weight).collect();
    Ok(MultilinearForm::from_raw(shape, coeffs))
}

/// Empirical `omega_T(g, delta)` at each entry of `deltas` (ascending).
///
/// Pairs are `x` uniform in `tile` and `y` uniform in the open ball of radius
/// `delta` around `x`. The profile is a running maximum, so it is
/// nondecreasing in `delta`. Every value is a lower estimate of the true sup.
pub fn modulus_of_continuity_profile<G>(g: G, tile: &AxisBox, deltas: &[f64], samples: usize, seed: u64) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidArgument("modulus of continuity needs delta > 0".into()));
    }
    if deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::NotOrdered("deltas must be ascending".into()));
    }
    let mut rng = sampling::rng(seed);
    let mut running: f64 = 0.0;
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        for _ in 0..samples {
            let x = sampling::in_box(&mut rng, tile);
            let y = if rng.gen_bool(0.5) {
                sampling::in_ball(&mut rng, &x, delta)
            } else {
                // push toward the rim, where the sup is attained for Lipschitz g
                let inner = sampling::in_ball(&mut rng, &x, delta);
                let d: f64 = inner.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let t = delta * (1.0 - 1e-9) / d.max(f64::MIN_POSITIVE);
                x.iter().zip(&inner).map(|(c, v)| c + t * (v - c)).collect()
            };
            let gx = g(&x);
            let gy = g(&y);
            let diff: f64 = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            running = running.max(diff);
        }
        out.push(running);
    }
    Ok(out)
}

/// Empirical `omega_T(g, delta)`: the last entry of the profile on the grid
/// `delta * j / 16`, `j = 1..=16`.
pub fn modulus_of_continuity<G>(g: G, tile: &AxisBox, delta: f64, samples: usize, seed: u64) -> Result<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    let grid: Vec<f64> = (1..=16).map(|j| delta * j as f64 / 16.0).collect();
    let per_step = samples.div_ceil(16).max(1);
    let profile = modulus_of_continuity_profile(g, tile, &grid, per_step, seed)?;
    Ok(*profile.last().expect("nonempty grid"))
}

/// Empirical `omega_T(grad_N f, delta)`.
pub fn gradient_modulus(f: &ScalarField, tile: &AxisBox, delta: f64, samples: usize, seed: u64) -> Result<f64> {
    f.shape().check_same(&tile.shape())?;
    n_gradient_slice(f, tile.center().as_slice())?;
    modulus_of_continuity(
        |x: &[f64]| n_gradient_slice(f, x).expect("differentiability checked"),
        tile,
        delta,
        samples,
        seed,
    )
}

/// Safe upper bound on `omega_T(grad_N f, delta)` from the field's gradient
/// envelope on the tile thickened by `delta`.
pub fn analytic_modulus(f: &ScalarField, tile: &AxisBox, delta: f64) -> Option<f64> {
    f.gradient_envelope(&tile.thickened(delta)).map(|l| l * delta)
}

/// `|int_{P(a,b)} d_N f dmu - box f(a, b)|` for `s = 1`.
pub fn verify_ftc_fact(f: &ScalarField, a: &Point, b: &Point, quad: QuadratureSpec) -> Result<f64> {
    let shape = f.shape();
    if shape.s() != 1 {
        return Err(Error::InvalidArgument(format!(
            "the box identity is stated for s = 1, got s = {}",
            shape.s()
        )));
    }
    if !matches!(quad, QuadratureSpec::TensorGrid { .. }) {
        return Err(Error::InvalidArgument("the box identity needs tensor-grid quadrature".into()));
    }
    let bx = AxisBox::new(a.clone(), b.clone(), BoxKind::Closed)?;
    let integral = gradient_increment(f, Region::Box(&bx), quad)?.coeffs()[0];
    Ok((integral - increment(f, a, b)?).abs())
}
