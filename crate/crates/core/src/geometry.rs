//! Index bookkeeping shared by every other module.
//!
//! Variables are organised in `r` groups of `s` coordinates each, so a point
//! of `V^N` is an `r x s` array of reals stored row-major (group-major).
//! Groups and coordinates are 0-based throughout the API.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

/// Number of groups `r` and coordinates per group `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexShape {
    r: usize,
    s: usize,
}

impl IndexShape {
    pub fn new(r: usize, s: usize) -> Result<Self> {
        if r == 0 || s == 0 || r > 30 {
            return Err(Error::InvalidShape { r, s });
        }
        Ok(Self { r, s })
    }

    /// Number of groups.
    #[inline]
    pub fn r(&self) -> usize {
        self.r
    }

    /// Coordinates per group.
    #[inline]
    pub fn s(&self) -> usize {
        self.s
    }

    /// Total number of real coordinates, `r * s`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.r * self.s
    }

    /// Number of multi-indices in `K^N`, i.e. `s^r`.
    pub fn multi_index_count(&self) -> usize {
        self.s.pow(self.r as u32)
    }

    /// Number of corner masks, `2^r`.
    pub fn corner_count(&self) -> usize {
        1usize << self.r
    }

    pub(crate) fn check_same(&self, other: &IndexShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected_r: self.r,
                expected_s: self.s,
                got_r: other.r,
                got_s: other.s,
            });
        }
        Ok(())
    }

    pub(crate) fn check_group(&self, n: usize) -> Result<()> {
        if n >= self.r {
            return Err(Error::IndexOutOfRange {
                what: "group",
                index: n,
                limit: self.r,
            });
        }
        Ok(())
    }

    /// All multi-indices of `K^N` in mixed-radix order (first group most significant).
    pub fn multi_indices(&self) -> MultiIndexIter {
        MultiIndexIter {
            s: self.s,
            current: Some(vec![0; self.r]),
        }
    }

    /// Position of multi-index `k` in the canonical layout.
    pub fn encode(&self, k: &[usize]) -> usize {
        debug_assert_eq!(k.len(), self.r);
        k.iter().fold(0, |acc, &kn| acc * self.s + kn)
    }

    /// Inverse of [`IndexShape::encode`].
    pub fn decode(&self, mut index: usize) -> Vec<usize> {
        let mut k = vec![0; self.r];
        for slot in k.iter_mut().rev() {
            *slot = index % self.s;
            index /= self.s;
        }
        k
    }
}

impl fmt::Display for IndexShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(r={}, s={})", self.r, self.s)
    }
}

/// Odometer over `{0..s}^r`.
#[derive(Debug, Clone)]
pub struct MultiIndexIter {
    s: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        let mut pos = next.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            next[pos] += 1;
            if next[pos] < self.s {
                self.current = Some(next);
                break;
            }
            next[pos] = 0;
        }
        Some(out)
    }
}

/// A point of `V^N`, stored group-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    shape: IndexShape,
    values: Vec<f64>,
}

impl Point {
    /// Builds a point from `r * s` finite values (group-major).
    pub fn new(shape: IndexShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.dim() {
            return Err(Error::LengthMismatch {
                expected: shape.dim(),
                got: values.len(),
            });
        }
        if let Some((position, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { position, value });
        }
        Ok(Self { shape, values })
    }

    /// Builds a point from per-group vectors, all of the same length.
    pub fn from_groups(groups: &[Vec<f64>]) -> Result<Self> {
        let r = groups.len();
        let s = groups.first().map_or(0, Vec::len);
        let shape = IndexShape::new(r, s)?;
        if groups.iter().any(|g| g.len() != s) {
            return Err(Error::InvalidArgument("groups must share one length".into()));
        }
        Self::new(shape, groups.concat())
    }

    /// Point with every coordinate equal to `value`.
    pub fn splat(shape: IndexShape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.dim()])
    }

    pub fn zeros(shape: IndexShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.dim()],
        }
    }

    /// Crate-internal constructor for values already known to be finite.
    pub(crate) fn from_raw(shape: IndexShape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.dim());
        Self { shape, values }
    }

    #[inline]
    pub fn shape(&self) -> IndexShape {
        self.shape
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Coordinates of group `n`.
    #[inline]
    pub fn group(&self, n: usize) -> &[f64] {
        let s = self.shape.s;
        &self.values[n * s..(n + 1) * s]
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.shape.s + k]
    }

    /// Euclidean norm over all `r * s` coordinates.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self - other`, coordinatewise.
    pub fn sub(&self, other: &Point) -> Result<Point> {
        self.shape.check_same(&other.shape)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Point::from_raw(self.shape, values))
    }

    /// Euclidean distance over all coordinates.
    pub fn distance(&self, other: &Point) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Restriction `x|_M`: the groups named by `groups`, in the given order.
    pub fn restrict(&self, groups: &[usize]) -> Result<Point> {
        let r = groups.len();
        let shape = IndexShape::new(r, self.shape.s)?;
        let mut values = Vec::with_capacity(shape.dim());
        for &n in groups {
            self.shape.check_group(n)?;
            values.extend_from_slice(self.group(n));
        }
        Ok(Point::from_raw(shape, values))
    }
}

impl Index<(usize, usize)> for Point {
    type Output = f64;

    fn index(&self, (n, k): (usize, usize)) -> &f64 {
        &self.values[n * self.shape.s + k]
    }
}

/// A subset `M` of the groups, stored as a bitmask (bit `n` set iff `n` in `M`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CornerMask(pub u32);

impl CornerMask {
    pub const EMPTY: CornerMask = CornerMask(0);

    /// The full set `N` for `r` groups.
    pub fn full(r: usize) -> Self {
        CornerMask(((1u64 << r) - 1) as u32)
    }

    pub fn from_groups(groups: &[usize]) -> Self {
        CornerMask(groups.iter().fold(0, |m, &n| m | (1 << n)))
    }

    #[inline]
    pub fn contains(&self, n: usize) -> bool {
        self.0 >> n & 1 == 1
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// `(-1)^{|M|}`.
    #[inline]
    pub fn sign(&self) -> f64 {
        if self.0.count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// `N \ M` for `r` groups.
    pub fn complement(&self, r: usize) -> Self {
        CornerMask(!self.0 & Self::full(r).0)
    }

    /// All `2^r` masks in ascending bitmask order.
    pub fn all(r: usize) -> impl Iterator<Item = CornerMask> {
        (0..(1u32 << r)).map(CornerMask)
    }
}

/// `pi_M(x, y)`: group `n` taken from `x` when `n` is in `M`, otherwise from `y`.
pub fn select_corner(x: &Point, y: &Point, mask: CornerMask) -> Result<Point> {
    x.shape.check_same(&y.shape)?;
    let mut out = Point::zeros(x.shape);
    write_corner(x.as_slice(), y.as_slice(), x.shape, mask, out.values_mut());
    Ok(out)
}

/// Writes `pi_M(x, y)` into `out` without allocating.
#[inline]
pub(crate) fn write_corner(x: &[f64], y: &[f64], shape: IndexShape, mask: CornerMask, out: &mut [f64]) {
    let s = shape.s;
    for n in 0..shape.r {
        let src = if mask.contains(n) { x } else { y };
        out[n * s..(n + 1) * s].copy_from_slice(&src[n * s..(n + 1) * s]);
    }
}

/// The corner set `Pi(x, y)` as `(mask, corner)` pairs in ascending mask order.
pub fn corner_set(x: &Point, y: &Point) -> Result<Vec<(CornerMask, Point)>> {
    x.shape.check_same(&y.shape)?;
    CornerMask::all(x.shape.r)
        .map(|m| select_corner(x, y, m).map(|p| (m, p)))
        .collect()
}

/// `(v, x|_{N \ {m}})_m`: copy of `x` with group `m` replaced by `v`.
pub fn substitute_axis(x: &Point, m: usize, v: &[f64]) -> Result<Point> {
    x.shape.check_group(m)?;
    if v.len() != x.shape.s {
        return Err(Error::LengthMismatch {
            expected: x.shape.s,
            got: v.len(),
        });
    }
    if let Some((position, &value)) = v.iter().enumerate().find(|(_, a)| !a.is_finite()) {
        return Err(Error::NonFinite { position, value });
    }
    let mut out = x.clone();
    let s = x.shape.s;
    out.values[m * s..(m + 1) * s].copy_from_slice(v);
    Ok(out)
}

/// `||u||^N`: product over groups of the Euclidean norm of each group.
pub fn group_norm_product(u: &Point) -> f64 {
    (0..u.shape.r)
        .map(|n| u.group(n).iter().map(|v| v * v).sum::<f64>().sqrt())
        .product()
}

/// Whether a box is closed (`P(a, b)`) or half-open (`Q(a, b)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    Closed,
    HalfOpen,
}

/// An axis-aligned box in `R^L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisBox {
    lo: Point,
    hi: Point,
    kind: BoxKind,
}

impl AxisBox {
    /// Box with `lo <= hi` coordinatewise.
    pub fn new(lo: Point, hi: Point, kind: BoxKind) -> Result<Self> {
        lo.shape.check_same(&hi.shape)?;
        if lo.values.iter().zip(&hi.values).any(|(a, b)| a > b) {
            return Err(Error::NotOrdered("box corners must satisfy lo <= hi".into()));
        }
        Ok(Self { lo, hi, kind })
    }

    /// The unit cube `[0, 1]^L`.
    pub fn unit(shape: IndexShape) -> Self {
        Self {
            lo: Point::zeros(shape),
            hi: Point::from_raw(shape, vec![1.0; shape.dim()]),
            kind: BoxKind::Closed,
        }
    }

    pub fn lo(&self) -> &Point {
        &self.lo
    }

    pub fn hi(&self) -> &Point {
        &self.hi
    }

    pub fn kind(&self) -> BoxKind {
        self.kind
    }

    pub fn shape(&self) -> IndexShape {
        self.lo.shape
    }

    pub fn with_kind(&self, kind: BoxKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    /// Lebesgue measure in `R^L`.
    pub fn volume(&self) -> f64 {
        self.lo.values.iter().zip(&self.hi.values).map(|(a, b)| b - a).product()
    }

    /// Length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.lo.distance(&self.hi)
    }

    pub fn center(&self) -> Point {
        let values = self
            .lo
            .values
            .iter()
            .zip(&self.hi.values)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Point::from_raw(self.lo.shape, values)
    }

    /// Membership respecting the box kind.
    pub fn contains(&self, x: &[f64]) -> bool {
        let lo = &self.lo.values;
        let hi = &self.hi.values;
        match self.kind {
            BoxKind::Closed => x.iter().enumerate().all(|(l, v)| lo[l] <= *v && *v <= hi[l]),
            BoxKind::HalfOpen => x.iter().enumerate().all(|(l, v)| lo[l] <= *v && *v < hi[l]),
        }
    }

    /// Closed-box membership with absolute slack `tol`.
    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> bool {
        let lo = &self.lo.values;
        let hi = &self.hi.values;
        x.iter()
            .enumerate()
            .all(|(l, v)| lo[l] - tol <= *v && *v <= hi[l] + tol)
    }

    /// Volume of the intersection with another box.
    pub fn overlap_volume(&self, other: &AxisBox) -> f64 {
        (0..self.lo.values.len())
            .map(|l| {
                let a = self.lo.values[l].max(other.lo.values[l]);
                let b = self.hi.values[l].min(other.hi.values[l]);
                (b - a).max(0.0)
            })
            .product()
    }

    /// Box grown by `margin` in every coordinate.
    pub fn thickened(&self, margin: f64) -> AxisBox {
        let lo = self.lo.values.iter().map(|v| v - margin).collect();
        let hi = self.hi.values.iter().map(|v| v + margin).collect();
        AxisBox {
            lo: Point::from_raw(self.lo.shape, lo),
            hi: Point::from_raw(self.lo.shape, hi),
            kind: self.kind,
        }
    }
}

/// Coefficients `lambda_k`, `k` in `K^N`, of an r-linear form on `V^N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultilinearForm {
    shape: IndexShape,
    coeffs: Vec<f64>,
}

impl MultilinearForm {
    /// Coefficients in mixed-radix order (see [`IndexShape::multi_indices`]).
    pub fn new(shape: IndexShape, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != shape.multi_index_count() {
            return Err(Error::LengthMismatch {
                expected: shape.multi_index_count(),
                got: coeffs.len(),
            });
        }
        if let Some((position, &value)) = coeffs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { position, value });
        }
        Ok(Self { shape, coeffs })
    }

    pub fn zeros(shape: IndexShape) -> Self {
        Self {
            shape,
            coeffs: vec![0.0; shape.multi_index_count()],
        }
    }

    pub(crate) fn from_raw(shape: IndexShape, coeffs: Vec<f64>) -> Self {
        Self { shape, coeffs }
    }

    pub fn shape(&self) -> IndexShape {
        self.shape
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: &[usize]) -> f64 {
        self.coeffs[self.shape.encode(k)]
    }

    /// Euclidean norm of the coefficient array.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest coefficientwise absolute difference.
    pub fn max_abs_diff(&self, other: &MultilinearForm) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, t: f64) -> MultilinearForm {
        MultilinearForm::from_raw(self.shape, self.coeffs.iter().map(|c| c * t).collect())
    }

    /// `lambda u^N = sum_k lambda_k prod_n u_{n, k_n}`.
    pub fn eval(&self, u: &Point) -> Result<f64> {
        self.shape.check_same(&u.shape)?;
        Ok(self.eval_slice(u.as_slice()))
    }

    pub(crate) fn eval_slice(&self, u: &[f64]) -> f64 {
        let s = self.shape.s;
        let r = self.shape.r;
        if s == 1 {
            return self.coeffs[0] * u.iter().product::<f64>();
        }
        // Horner-style contraction, one group at a time from the last.
        let mut acc = self.coeffs.clone();
        for n in (0..r).rev() {
            let group = &u[n * s..(n + 1) * s];
            acc = acc
                .chunks(s)
                .map(|chunk| chunk.iter().zip(group).map(|(c, v)| c * v).sum())
                .collect();
        }
        acc[0]
    }
}

/// Free-function form of [`MultilinearForm::eval`].
pub fn eval_form(form: &MultilinearForm, u: &Point) -> Result<f64> {
    form.eval(u)
}
