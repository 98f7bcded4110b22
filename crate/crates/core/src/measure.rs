//! Measures on the tile through their multivariate distributions
//! `d(x) = nu(Q(0, x))`, the induced expanding map `g`, and invariance.
//!
//! Every measure here lives on a tile with one coordinate per group (`s = 1`).

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldSpec, Monomial, Polynomial, ScalarField};
use crate::geometry::{AxisBox, IndexShape, Point};
use crate::gradient::{average_gradient, n_gradient_slice, QuadratureSpec, Region, Representative};
use crate::ifs::{in_half_open, ratio_to_f64, AffineIFS, ExactForm};
use crate::increment::increment;
use crate::mw;
use crate::numeric::linspace;

/// Tolerance for `d(0) = 0`.
const ORIGIN_TOLERANCE: f64 = 1e-12;

/// Lower tolerance on a fitted multiple of Lebesgue measure.
const LAMBDA_FLOOR: f64 = -1e-10;

/// Largest number of box pairs scanned by the pushforward check.
const BOX_PAIR_CAP: usize = 50_000;

/// A measure given by its multivariate distribution function.
#[derive(Debug, Clone)]
pub struct DistributionMeasure {
    distribution: ScalarField,
}

impl DistributionMeasure {
    /// Wraps a distribution; requires `s = 1` and `d(0) = 0`.
    pub fn new(distribution: ScalarField) -> Result<Self> {
        let shape = distribution.shape();
        if shape.s() != 1 {
            return Err(Error::InvalidArgument(format!(
                "distribution functions need one coordinate per group, got s = {}",
                shape.s()
            )));
        }
        let at_origin = distribution.eval(&Point::zeros(shape));
        if !(at_origin.abs() <= ORIGIN_TOLERANCE) {
            return Err(Error::InvalidArgument(format!(
                "a distribution function vanishes at the origin, got d(0) = {at_origin}"
            )));
        }
        Ok(Self { distribution })
    }

    /// Lebesgue measure: `d(x) = prod_n x_n`.
    pub fn lebesgue(r: usize) -> Result<Self> {
        Self::power(&vec![1; r])
    }

    /// `d(x) = prod_n x_n^{e_n}` with every `e_n >= 1`.
    pub fn power(exponents: &[u32]) -> Result<Self> {
        if exponents.contains(&0) {
            return Err(Error::InvalidArgument("power distributions need exponents >= 1".into()));
        }
        let shape = IndexShape::new(exponents.len(), 1)?;
        let field = Polynomial::new(
            shape,
            vec![Monomial {
                coeff: 1.0,
                exponents: exponents.to_vec(),
            }],
        )?
        .into_field();
        Self::new(field)
    }

    /// The zero measure.
    pub fn zero(r: usize) -> Result<Self> {
        Self::new(ScalarField::zero(IndexShape::new(r, 1)?))
    }

    pub fn distribution(&self) -> &ScalarField {
        &self.distribution
    }

    pub fn shape(&self) -> IndexShape {
        self.distribution.shape()
    }

    /// `d_N d(x)`, the density when `d` is smooth enough.
    pub fn density(&self, x: &Point) -> Result<f64> {
        self.shape().check_same(&x.shape())?;
        Ok(n_gradient_slice(&self.distribution, x.as_slice())?[0])
    }
}

/// Distribution as written in an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Lebesgue,
    Power { exponents: Vec<u32> },
    Zero,
    Field { field: FieldSpec },
}

impl DistributionSpec {
    pub fn build(&self, shape: IndexShape) -> Result<DistributionMeasure> {
        match self {
            DistributionSpec::Lebesgue => DistributionMeasure::lebesgue(shape.r()),
            DistributionSpec::Power { exponents } => {
                if exponents.len() != shape.r() {
                    return Err(Error::LengthMismatch {
                        expected: shape.r(),
                        got: exponents.len(),
                    });
                }
                DistributionMeasure::power(exponents)
            }
            DistributionSpec::Zero => DistributionMeasure::zero(shape.r()),
            DistributionSpec::Field { field } => DistributionMeasure::new(field.build(shape)?),
        }
    }
}

fn check_ordered(a: &Point, b: &Point) -> Result<()> {
    a.shape().check_same(&b.shape())?;
    if a.as_slice().iter().zip(b.as_slice()).any(|(x, y)| x > y) {
        return Err(Error::NotOrdered(format!(
            "box corners must satisfy a <= b, got {:?} and {:?}",
            a.as_slice(),
            b.as_slice()
        )));
    }
    Ok(())
}

/// `nu(Q(a, b)) = box d(a, b)` for `a <= b`.
pub fn box_measure(nu: &DistributionMeasure, a: &Point, b: &Point) -> Result<f64> {
    nu.shape().check_same(&a.shape())?;
    check_ordered(a, b)?;
    increment(&nu.distribution, a, b)
}

/// Density bound `C` and the worst violation of `nu(Q) <= C mu(Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsoluteContinuity {
    pub constant: f64,
    pub max_violation: f64,
}

/// Estimates `C = sup |d_N d|` on a `points_per_axis` grid over `region`
/// and checks `nu(Q) - C mu(Q)` on every grid cell.
pub fn absolute_continuity_bound(nu: &DistributionMeasure, region: &AxisBox, points_per_axis: usize) -> Result<AbsoluteContinuity> {
    nu.shape().check_same(&region.shape())?;
    if points_per_axis < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
    }
    let r = nu.shape().r();
    let axes: Vec<Vec<f64>> = (0..r)
        .map(|n| linspace(region.lo().as_slice()[n], region.hi().as_slice()[n], points_per_axis))
        .collect();
    let nodes = grid_points(nu.shape(), &axes);
    let constant = nodes
        .par_iter()
        .map(|x| nu.density(x).map(f64::abs))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let cells = grid_cells(nu.shape(), &axes);
    let mut max_violation = f64::NEG_INFINITY;
    for (a, b) in &cells {
        let vol: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| y - x).product();
        max_violation = max_violation.max(box_measure(nu, a, b)? - constant * vol);
    }
    Ok(AbsoluteContinuity {
        constant,
        max_violation,
    })
}

fn grid_points(shape: IndexShape, axes: &[Vec<f64>]) -> Vec<Point> {
    let mut out = vec![Vec::with_capacity(shape.dim())];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(|v| Point::from_raw(shape, v)).collect()
}

fn grid_cells(shape: IndexShape, axes: &[Vec<f64>]) -> Vec<(Point, Point)> {
    let lows: Vec<Vec<f64>> = axes.iter().map(|a| a[..a.len() - 1].to_vec()).collect();
    let highs: Vec<Vec<f64>> = axes.iter().map(|a| a[1..].to_vec()).collect();
    grid_points(shape, &lows)
        .into_iter()
        .zip(grid_points(shape, &highs))
        .collect()
}

/// `g(x) = (gamma^i)^{-1}(x)` on the half-open cell of map `i`, `0` off every cell.
///
/// Cells are tested in ascending map order.
pub fn g_gamma(ifs: &AffineIFS, x: &Point) -> Result<(Point, Option<usize>)> {
    ifs.shape().check_same(&x.shape())?;
    if !ifs.tile_contains(x.as_slice()) {
        return Err(Error::OutsideTile(format!("{:?}", x.as_slice())));
    }
    let mut pre = vec![0.0; x.as_slice().len()];
    for (i, m) in ifs.maps().iter().enumerate() {
        let cell = ifs.image_box(i).with_kind(crate::geometry::BoxKind::HalfOpen);
        if cell.contains(x.as_slice()) {
            m.invert_slice(x.as_slice(), &mut pre);
            if ifs.tile().as_box().is_some() || ifs.tile_contains(&pre) {
                return Ok((Point::from_raw(x.shape(), pre), Some(i)));
            }
        }
    }
    Ok((Point::zeros(x.shape()), None))
}

/// The distribution of the pushforward under `g`: `x -> M d(x)`.
pub fn pushforward_distribution(ifs: &AffineIFS, nu: &DistributionMeasure) -> Result<DistributionMeasure> {
    ifs.shape().check_same(&nu.shape())?;
    let ifs = ifs.clone();
    let d = nu.distribution.clone();
    let field = ScalarField::from_fn(nu.shape(), format!("pushforward of {}", d.label()), move |x| {
        mw::apply(&ifs, &d, &Point::from_raw(d.shape(), x.to_vec())).expect("shapes checked")
    });
    Ok(DistributionMeasure { distribution: field })
}

/// `nu_g(Q(a, b)) = sum_i nu(gamma^i(Q(a, b)))` through image boxes.
pub fn pushforward_box_measure(ifs: &AffineIFS, nu: &DistributionMeasure, a: &Point, b: &Point) -> Result<f64> {
    ifs.shape().check_same(&nu.shape())?;
    check_ordered(a, b)?;
    let mut total = 0.0;
    for m in ifs.maps() {
        total += box_measure(nu, &m.apply(a), &m.apply(b))?;
    }
    Ok(total)
}

/// Which characterization of invariance to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceMethod {
    /// `M d = d` on the sample grid.
    FixedPoint,
    /// `nu_g(Q) = nu(Q)` on boxes spanned by the sample grid.
    PushforwardBoxes,
    /// `d(x) = lambda prod_n x_n` with `lambda >= 0`.
    MultilinearForm,
}

impl InvarianceMethod {
    pub const ALL: [InvarianceMethod; 3] = [
        InvarianceMethod::FixedPoint,
        InvarianceMethod::PushforwardBoxes,
        InvarianceMethod::MultilinearForm,
    ];
}

/// Verdict of one invariance method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodVerdict {
    pub method: InvarianceMethod,
    pub pass: bool,
    pub residual: f64,
    /// Point (or upper box corner) where the residual peaks.
    pub argmax: Vec<f64>,
    /// Lower box corner for the box method.
    pub argmax_lower: Option<Vec<f64>>,
    pub lambda: Option<f64>,
}

/// Outcome of [`check_invariance`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub verdicts: Vec<MethodVerdict>,
    /// All verdicts agree.
    pub coherent: bool,
    pub tol: f64,
    pub grid_points_per_axis: usize,
}

impl InvarianceReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, method: InvarianceMethod) -> Option<&MethodVerdict> {
        self.verdicts.iter().find(|v| v.method == method)
    }
}

fn argmax_by<T: Clone>(items: &[(T, f64)]) -> (T, f64) {
    let mut best = items[0].clone();
    for it in items {
        if it.1 > best.1 {
            best = it.clone();
        }
    }
    best
}

/// Tests invariance of `nu` under `g` by each requested method on a grid of
/// `points_per_axis` nodes per axis spanning the tile's bounding box.
pub fn check_invariance(
    ifs: &AffineIFS,
    nu: &DistributionMeasure,
    methods: &[InvarianceMethod],
    tol: f64,
    points_per_axis: usize,
) -> Result<InvarianceReport> {
    ifs.shape().check_same(&nu.shape())?;
    if points_per_axis < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
    }
    let shape = nu.shape();
    let bbox = ifs.tile().bounding_box();
    let axes: Vec<Vec<f64>> = (0..shape.r())
        .map(|n| linspace(bbox.lo().as_slice()[n], bbox.hi().as_slice()[n], points_per_axis))
        .collect();
    let grid: Vec<Point> = grid_points(shape, &axes)
        .into_iter()
        .filter(|x| ifs.tile_contains(x.as_slice()))
        .collect();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("no grid point lies in the tile".into()));
    }

    let mut verdicts = Vec::with_capacity(methods.len());
    for &method in methods {
        let verdict = match method {
            InvarianceMethod::FixedPoint => {
                let rows = grid
                    .par_iter()
                    .map(|x| Ok((x.clone(), (mw::apply(ifs, nu.distribution(), x)? - nu.distribution().eval(x)).abs())))
                    .collect::<Result<Vec<_>>>()?;
                let (x, res) = argmax_by(&rows);
                MethodVerdict {
                    method,
                    pass: res <= tol,
                    residual: res,
                    argmax: x.into_values(),
                    argmax_lower: None,
                    lambda: None,
                }
            }
            InvarianceMethod::PushforwardBoxes => {
                let pairs = box_pairs(&grid, points_per_axis);
                let rows = pairs
                    .par_iter()
                    .map(|(a, b)| {
                        let diff = pushforward_box_measure(ifs, nu, a, b)? - box_measure(nu, a, b)?;
                        Ok(((a.clone(), b.clone()), diff.abs()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ((a, b), res) = argmax_by(&rows);
                MethodVerdict {
                    method,
                    pass: res <= tol,
                    residual: res,
                    argmax: b.into_values(),
                    argmax_lower: Some(a.into_values()),
                    lambda: None,
                }
            }
            InvarianceMethod::MultilinearForm => {
                let depth = mw::default_fit_depth(ifs, 4096);
                let quad = QuadratureSpec::SelfSimilar {
                    depth,
                    representative: Representative::Centroid,
                };
                let lambda = average_gradient(nu.distribution(), Region::Ifs(ifs), quad)?.coeffs()[0];
                let rows: Vec<(Point, f64)> = grid
                    .iter()
                    .map(|x| {
                        let lin: f64 = lambda * x.as_slice().iter().product::<f64>();
                        (x.clone(), (nu.distribution().eval(x) - lin).abs())
                    })
                    .collect();
                let (x, res) = argmax_by(&rows);
                MethodVerdict {
                    method,
                    pass: res <= tol && lambda >= LAMBDA_FLOOR,
                    residual: res,
                    argmax: x.into_values(),
                    argmax_lower: None,
                    lambda: Some(lambda),
                }
            }
        };
        verdicts.push(verdict);
    }
    let coherent = verdicts.iter().all(|v| v.pass) || verdicts.iter().all(|v| !v.pass);
    Ok(InvarianceReport {
        verdicts,
        coherent,
        tol,
        grid_points_per_axis: points_per_axis,
    })
}

/// Ordered grid pairs `a <= b`; falls back to origin-anchored boxes and
/// single cells when the full list would be too long.
fn box_pairs(grid: &[Point], points_per_axis: usize) -> Vec<(Point, Point)> {
    let le = |a: &Point, b: &Point| a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x <= y);
    let estimate = grid.len().saturating_mul(grid.len()) / 2;
    if estimate <= BOX_PAIR_CAP {
        let mut out = Vec::new();
        for a in grid {
            for b in grid {
                if le(a, b) {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        return out;
    }
    let origin = Point::zeros(grid[0].shape());
    let step = 1.0 / (points_per_axis - 1) as f64;
    let mut out: Vec<(Point, Point)> = grid
        .iter()
        .filter(|b| le(&origin, b))
        .map(|b| (origin.clone(), b.clone()))
        .collect();
    for a in grid {
        let hi: Vec<f64> = a.as_slice().iter().map(|v| v + step).collect();
        if let Some(b) = grid.iter().find(|g| g.as_slice().iter().zip(&hi).all(|(x, y)| (x - y).abs() < 1e-12)) {
            out.push((a.clone(), b.clone()));
        }
    }
    out
}

/// Parses a finite decimal such as `"0.35424971"` or `"-2.5e-3"` exactly.
pub fn parse_decimal(text: &str) -> Result<Ratio<i128>> {
    let bad = || Error::InvalidArgument(format!("not a finite decimal: {text:?}"));
    let t = text.trim();
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (t, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let all: String = format!("{int_part}{frac_part}");
    let numer: i128 = if all.is_empty() { 0 } else { all.parse().map_err(|_| bad())? };
    let scale = exp - frac_part.len() as i32;
    let ten = |k: u32| 10i128.checked_pow(k).ok_or_else(bad);
    let value = if scale >= 0 {
        Ratio::from_integer(numer.checked_mul(ten(scale as u32)?).ok_or_else(bad)?)
    } else {
        Ratio::new(numer, ten((-scale) as u32)?)
    };
    Ok(if neg { -value } else { value })
}

/// Empirical companion to invariance: visit frequencies of an orbit of `g`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitStats {
    pub start: Vec<f64>,
    pub steps: usize,
    pub bins_per_axis: usize,
    /// Visit counts per grid cell, first axis most significant.
    pub counts: Vec<u64>,
    /// `counts / steps`; sums to at most one.
    pub frequencies: Vec<f64>,
    /// Visits outside the tile's bounding box.
    pub escaped: u64,
    /// Steps that landed off every cell and were sent to the origin.
    pub off_cell: u64,
    /// First iterates, starting with `x_0`.
    pub trajectory: Vec<Vec<f64>>,
    /// Whether the orbit was computed in exact rational arithmetic.
    pub exact: bool,
    /// Label carried for reporting only; the orbit is deterministic.
    pub seed: u64,
}

/// Iterates `g` from `x0` for `steps` steps, binning `x_0, ..., x_{steps-1}`
/// on a uniform grid over the tile's bounding box.
///
/// Systems with a rational form run in exact arithmetic, starting from
/// the shortest decimal representation of each coordinate of `x0`.
pub fn simulate_orbit(
    ifs: &AffineIFS,
    x0: &Point,
    steps: usize,
    bins_per_axis: usize,
    keep: usize,
    seed: u64,
) -> Result<OrbitStats> {
    ifs.shape().check_same(&x0.shape())?;
    if bins_per_axis == 0 {
        return Err(Error::InvalidArgument("need at least one bin per axis".into()));
    }
    if !ifs.tile_contains(x0.as_slice()) {
        return Err(Error::OutsideTile(format!("{:?}", x0.as_slice())));
    }
    let start: Vec<f64> = x0.as_slice().to_vec();
    match ifs.exact_form() {
        Some(exact) => {
            let x: Vec<Ratio<i128>> = start
                .iter()
                .map(|v| parse_decimal(&v.to_string()))
                .collect::<Result<_>>()?;
            exact_orbit(ifs.shape(), exact, x, steps, bins_per_axis, keep, seed, start)
        }
        None => float_orbit(ifs, x0, steps, bins_per_axis, keep, seed),
    }
}

/// Exact orbit from rational start coordinates.
pub fn simulate_orbit_exact(
    ifs: &AffineIFS,
    x0: &[Ratio<i128>],
    steps: usize,
    bins_per_axis: usize,
    keep: usize,
    seed: u64,
) -> Result<OrbitStats> {
    let exact = ifs
        .exact_form()
        .ok_or_else(|| Error::InvalidArgument("system has no exact rational form".into()))?;
    if x0.len() != ifs.shape().dim() {
        return Err(Error::LengthMismatch {
            expected: ifs.shape().dim(),
            got: x0.len(),
        });
    }
    if bins_per_axis == 0 {
        return Err(Error::InvalidArgument("need at least one bin per axis".into()));
    }
    let start: Vec<f64> = x0.iter().map(ratio_to_f64).collect();
    if !ifs.tile_contains(&start) {
        return Err(Error::OutsideTile(format!("{start:?}")));
    }
    exact_orbit(ifs.shape(), exact, x0.to_vec(), steps, bins_per_axis, keep, seed, start)
}

struct Binner {
    dim: usize,
    bins: usize,
    counts: Vec<u64>,
    escaped: u64,
}

impl Binner {
    fn new(dim: usize, bins: usize) -> Result<Self> {
        let cells = crate::numeric::checked_pow(bins, dim)
            .filter(|&c| c <= 1 << 24)
            .ok_or_else(|| Error::InvalidArgument("orbit grid too fine".into()))?;
        Ok(Self {
            dim,
            bins,
            counts: vec![0; cells as usize],
            escaped: 0,
        })
    }

    /// `cells` holds per-axis bin indices, `None` when outside the box.
    fn record(&mut self, cells: impl Iterator<Item = Option<usize>>) {
        let mut idx = 0usize;
        let mut seen = 0;
        for c in cells {
            match c {
                Some(c) => idx = idx * self.bins + c,
                None => {
                    self.escaped += 1;
                    return;
                }
            }
            seen += 1;
        }
        debug_assert_eq!(seen, self.dim);
        self.counts[idx] += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn exact_orbit(
    shape: IndexShape,
    exact: &ExactForm,
    mut x: Vec<Ratio<i128>>,
    steps: usize,
    bins: usize,
    keep: usize,
    seed: u64,
    start: Vec<f64>,
) -> Result<OrbitStats> {
    let s = shape.s();
    let dim = shape.dim();
    let widths: Vec<Ratio<i128>> = exact.tile_hi.iter().zip(&exact.tile_lo).map(|(h, l)| h - l).collect();
    let bins_r = Ratio::from_integer(bins as i128);
    let mut binner = Binner::new(dim, bins)?;
    let mut trajectory = Vec::new();
    let mut off_cell = 0u64;
    let zero = Ratio::<i128>::zero();
    let mut lo_i = vec![zero; dim];
    let mut hi_i = vec![zero; dim];
    for _ in 0..steps {
        if trajectory.len() < keep {
            trajectory.push(x.iter().map(ratio_to_f64).collect());
        }
        binner.record((0..dim).map(|l| {
            if x[l] < exact.tile_lo[l] || x[l] > exact.tile_hi[l] {
                return None;
            }
            let t = ((x[l] - exact.tile_lo[l]) * bins_r / widths[l]).floor().to_integer();
            t.to_usize().map(|c| c.min(bins - 1))
        }));
        // locate the half-open cell, lowest index first
        let mut next = None;
        for (i, (inv, off)) in exact.inv_alpha.iter().zip(&exact.offsets).enumerate() {
            for l in 0..dim {
                let a = Ratio::new(1, inv[l / s]);
                lo_i[l] = a * exact.tile_lo[l] + off[l];
                hi_i[l] = a * exact.tile_hi[l] + off[l];
            }
            if (0..dim).all(|l| in_half_open(&x[l], &lo_i[l], &hi_i[l])) {
                next = Some(i);
                break;
            }
        }
        match next {
            Some(i) => {
                let inv = &exact.inv_alpha[i];
                let off = &exact.offsets[i];
                for l in 0..dim {
                    x[l] = (x[l] - off[l]) * Ratio::from_integer(inv[l / s]);
                }
            }
            None => {
                off_cell += 1;
                x.iter_mut().for_each(|v| *v = zero);
            }
        }
    }
    Ok(finish(start, steps, bins, binner, off_cell, trajectory, true, seed))
}

fn float_orbit(ifs: &AffineIFS, x0: &Point, steps: usize, bins: usize, keep: usize, seed: u64) -> Result<OrbitStats> {
    let dim = ifs.shape().dim();
    let bbox = ifs.tile().bounding_box().clone();
    let lo = bbox.lo().as_slice();
    let hi = bbox.hi().as_slice();
    let mut binner = Binner::new(dim, bins)?;
    let mut trajectory = Vec::new();
    let mut off_cell = 0u64;
    let mut x = x0.clone();
    for _ in 0..steps {
        if trajectory.len() < keep {
            trajectory.push(x.as_slice().to_vec());
        }
        binner.record(x.as_slice().iter().enumerate().map(|(l, &v)| {
            if v < lo[l] || v > hi[l] {
                return None;
            }
            let t = ((v - lo[l]) / (hi[l] - lo[l]) * bins as f64).floor() as usize;
            Some(t.min(bins - 1))
        }));
        let (next, cell) = match g_gamma(ifs, &x) {
            Ok(step) => step,
            Err(Error::OutsideTile(_)) => (Point::zeros(x.shape()), None),
            Err(e) => return Err(e),
        };
        if cell.is_none() {
            off_cell += 1;
        }
        x = next;
    }
    Ok(finish(x0.as_slice().to_vec(), steps, bins, binner, off_cell, trajectory, false, seed))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    start: Vec<f64>,
    steps: usize,
    bins: usize,
    binner: Binner,
    off_cell: u64,
    trajectory: Vec<Vec<f64>>,
    exact: bool,
    seed: u64,
) -> OrbitStats {
    let denom = steps.max(1) as f64;
    OrbitStats {
        start,
        steps,
        bins_per_axis: bins,
        frequencies: binner.counts.iter().map(|&c| c as f64 / denom).collect(),
        counts: binner.counts,
        escaped: binner.escaped,
        off_cell,
        trajectory,
        exact,
        seed,
    }
}
