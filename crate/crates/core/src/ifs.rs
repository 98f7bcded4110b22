//! Affine iterated function systems `gamma^i(x) = (alpha^i_n x_n + a^i_n)_n`.
//!
//! Each map scales group `n` by a scalar `alpha^i_n` and translates by the
//! point `a^i = gamma^i(0)`. The tile `T` is the attractor the system is
//! expected to tile; hypotheses about the system are checked by
//! [`AffineIFS::validate_hypotheses`] rather than enforced at construction.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, BoxKind, CornerMask, IndexShape, Point};
use crate::numeric::checked_pow;
use crate::sampling;

/// Default cap on the number of words, points or evaluations a routine may touch.
pub const DEFAULT_BUDGET: u128 = 1 << 24;

/// Absolute tolerance used when deduplicating admissible points.
pub const DEDUP_TOLERANCE: f64 = 1e-12;

/// Depth of the address search used for attractor membership.
const ATTRACTOR_DEPTH: usize = 12;

/// One contraction `x -> (alpha_n x_n + a_n)_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineMap {
    alpha: Vec<f64>,
    offset: Point,
}

impl AffineMap {
    pub fn new(alpha: Vec<f64>, offset: Point) -> Result<Self> {
        let shape = offset.shape();
        if alpha.len() != shape.r() {
            return Err(Error::LengthMismatch {
                expected: shape.r(),
                got: alpha.len(),
            });
        }
        if let Some(&a) = alpha.iter().find(|a| !a.is_finite() || **a <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "contraction factors must be finite and positive, got {a}"
            )));
        }
        Ok(Self { alpha, offset })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `a^i = gamma^i(0)`.
    pub fn offset(&self) -> &Point {
        &self.offset
    }

    /// Volume ratio `mu(gamma^i(T)) / mu(T) = prod_n (alpha^i_n)^s`.
    pub fn beta(&self) -> f64 {
        volume_ratio(&self.alpha, self.offset.shape().s())
    }

    /// `prod_n alpha^i_n`, the factor by which this map scales `lambda x^N`.
    pub fn multilinear_factor(&self) -> f64 {
        self.alpha.iter().product()
    }

    #[inline]
    pub(crate) fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        let s = self.offset.shape().s();
        let a = self.offset.as_slice();
        for (l, o) in out.iter_mut().enumerate() {
            *o = self.alpha[l / s] * x[l] + a[l];
        }
    }

    pub fn apply(&self, x: &Point) -> Point {
        let mut out = vec![0.0; x.as_slice().len()];
        self.apply_slice(x.as_slice(), &mut out);
        Point::from_raw(x.shape(), out)
    }

    #[inline]
    pub(crate) fn invert_slice(&self, x: &[f64], out: &mut [f64]) {
        let s = self.offset.shape().s();
        let a = self.offset.as_slice();
        for (l, o) in out.iter_mut().enumerate() {
            *o = (x[l] - a[l]) / self.alpha[l / s];
        }
    }

    fn image_box(&self, b: &AxisBox) -> AxisBox {
        let lo = self.apply(b.lo());
        let hi = self.apply(b.hi());
        AxisBox::new(lo, hi, b.kind()).expect("positive scaling preserves order")
    }
}

/// The reference tile `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tile {
    Box(AxisBox),
    /// Attractor known only through a bounding box (mapped into itself by
    /// every map) and its Lebesgue measure.
    Attractor { bounding_box: AxisBox, volume: f64 },
}

impl Tile {
    pub fn bounding_box(&self) -> &AxisBox {
        match self {
            Tile::Box(b) => b,
            Tile::Attractor { bounding_box, .. } => bounding_box,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Tile::Box(b) => b.volume(),
            Tile::Attractor { volume, .. } => *volume,
        }
    }

    /// Diameter (for attractors, the bounding-box diagonal, an upper bound).
    pub fn diameter(&self) -> f64 {
        self.bounding_box().diameter()
    }

    pub fn as_box(&self) -> Option<&AxisBox> {
        match self {
            Tile::Box(b) => Some(b),
            Tile::Attractor { .. } => None,
        }
    }
}

/// Rational form of a system whose inverse maps are `x -> m (x - a)` with integer `m`.
///
/// Lets the induced expanding map be iterated exactly on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactForm {
    /// Per map, per group: `1 / alpha`.
    pub inv_alpha: Vec<Vec<i128>>,
    /// Per map, per coordinate: `a^i`.
    pub offsets: Vec<Vec<Ratio<i128>>>,
    pub tile_lo: Vec<Ratio<i128>>,
    pub tile_hi: Vec<Ratio<i128>>,
}

/// Best rational approximation with denominator at most `max_den`, accepted
/// only when it reproduces `v` within `tol`.
pub fn rationalize(v: f64, max_den: i128, tol: f64) -> Option<Ratio<i128>> {
    if !v.is_finite() {
        return None;
    }
    let (mut h0, mut h1): (i128, i128) = (0, 1);
    let (mut k0, mut k1): (i128, i128) = (1, 0);
    let mut x = v;
    for _ in 0..64 {
        let a = x.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai.checked_mul(h1)?.checked_add(h0)?;
        let k2 = ai.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64) / (k1 as f64) - v).abs() <= tol {
            return Some(Ratio::new(h1, k1));
        }
        let frac = x - a;
        if frac == 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    if k1 != 0 && ((h1 as f64) / (k1 as f64) - v).abs() <= tol {
        Some(Ratio::new(h1, k1))
    } else {
        None
    }
}

/// A composed map `gamma^w = gamma^{w_1} o ... o gamma^{w_p}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiIndexMap {
    pub word: Vec<usize>,
    /// Per-group products of contraction factors.
    pub alpha: Vec<f64>,
    /// `a^w = gamma^w(0)`.
    pub anchor: Point,
}

impl MultiIndexMap {
    /// The empty word: `alpha = 1`, `a = 0`.
    pub fn identity(shape: IndexShape) -> Self {
        Self {
            word: Vec::new(),
            alpha: vec![1.0; shape.r()],
            anchor: Point::zeros(shape),
        }
    }

    /// `self o other`.
    pub fn then(&self, other: &MultiIndexMap) -> MultiIndexMap {
        let s = self.anchor.shape().s();
        let alpha = self.alpha.iter().zip(&other.alpha).map(|(a, b)| a * b).collect();
        let anchor: Vec<f64> = other
            .anchor
            .as_slice()
            .iter()
            .enumerate()
            .map(|(l, v)| self.alpha[l / s] * v + self.anchor.as_slice()[l])
            .collect();
        let mut word = self.word.clone();
        word.extend_from_slice(&other.word);
        MultiIndexMap {
            word,
            alpha,
            anchor: Point::from_raw(self.anchor.shape(), anchor),
        }
    }

    /// Volume ratio `prod_n (alpha^w_n)^s`.
    pub fn beta(&self) -> f64 {
        volume_ratio(&self.alpha, self.anchor.shape().s())
    }

    pub fn apply(&self, x: &Point) -> Point {
        let mut out = vec![0.0; x.as_slice().len()];
        apply_affine(&self.alpha, self.anchor.as_slice(), x.as_slice(), &mut out);
        Point::from_raw(x.shape(), out)
    }
}

/// `prod_n alpha_n^s`.
#[inline]
pub(crate) fn volume_ratio(alpha: &[f64], s: usize) -> f64 {
    alpha.iter().map(|a| a.powi(s as i32)).product()
}

#[inline]
pub(crate) fn apply_affine(alpha: &[f64], anchor: &[f64], x: &[f64], out: &mut [f64]) {
    let s = x.len() / alpha.len();
    for (l, o) in out.iter_mut().enumerate() {
        *o = alpha[l / s] * x[l] + anchor[l];
    }
}

/// A finite affine IFS with its tile.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIFS {
    shape: IndexShape,
    maps: Vec<AffineMap>,
    tile: Tile,
    exact: Option<ExactForm>,
}

impl AffineIFS {
    pub fn new(shape: IndexShape, maps: Vec<AffineMap>, tile: Tile) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidArgument("an IFS needs at least two maps".into()));
        }
        for m in &maps {
            shape.check_same(&m.offset.shape())?;
        }
        shape.check_same(&tile.bounding_box().shape())?;
        if !(tile.volume() > 0.0) || !tile.volume().is_finite() {
            return Err(Error::ZeroMeasure);
        }
        let exact = detect_exact(&maps, &tile);
        Ok(Self {
            shape,
            maps,
            tile,
            exact,
        })
    }

    pub fn shape(&self) -> IndexShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[AffineMap] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> Result<&AffineMap> {
        self.maps.get(i).ok_or(Error::IndexOutOfRange {
            what: "map",
            index: i,
            limit: self.maps.len(),
        })
    }

    pub fn tile(&self) -> &Tile {
        &self.tile
    }

    pub fn exact_form(&self) -> Option<&ExactForm> {
        self.exact.as_ref()
    }

    /// `q = sup_{i, n} alpha^i_n`.
    pub fn q(&self) -> f64 {
        self.maps
            .iter()
            .flat_map(|m| m.alpha.iter().copied())
            .fold(0.0, f64::max)
    }

    /// `sum_i beta^i`; equals one when the images tile `T`.
    pub fn beta_sum(&self) -> f64 {
        self.maps.iter().map(AffineMap::beta).sum()
    }

    /// `sum_i prod_n alpha^i_n`: the operator maps `lambda x^N` to this
    /// multiple of itself. Coincides with [`Self::beta_sum`] when `s = 1`.
    pub fn multilinear_scale(&self) -> f64 {
        self.maps.iter().map(AffineMap::multilinear_factor).sum()
    }

    /// `q^p * diam T`, the bound on the diameter of every depth-`p` cell.
    pub fn cell_diameter_bound(&self, p: usize) -> f64 {
        self.q().powi(p as i32) * self.tile.diameter()
    }

    /// Barycentre of `T` with respect to Lebesgue measure.
    ///
    /// For a box this is the centre; for an attractor it is the fixed point
    /// of `c = sum_i beta^i gamma^i(c)`, which holds whenever the images tile `T`.
    pub fn tile_centroid(&self) -> Point {
        match &self.tile {
            Tile::Box(b) => b.center(),
            Tile::Attractor { .. } => {
                let s = self.shape.s();
                let total: f64 = self.beta_sum();
                let values = (0..self.shape.dim())
                    .map(|l| {
                        let n = l / s;
                        let num: f64 = self.maps.iter().map(|m| m.beta() * m.offset.as_slice()[l]).sum();
                        let den: f64 = total - self.maps.iter().map(|m| m.beta() * m.alpha[n]).sum::<f64>();
                        num / den
                    })
                    .collect();
                Point::from_raw(self.shape, values)
            }
        }
    }

    /// Closed membership in `T`.
    pub fn tile_contains(&self, x: &[f64]) -> bool {
        match &self.tile {
            Tile::Box(b) => b.contains_with_tol(x, 1e-12),
            Tile::Attractor { bounding_box, .. } => self.attractor_contains(bounding_box, x, ATTRACTOR_DEPTH),
        }
    }

    fn attractor_contains(&self, bbox: &AxisBox, x: &[f64], depth: usize) -> bool {
        if !bbox.contains_with_tol(x, 1e-12) {
            return false;
        }
        if depth == 0 {
            return true;
        }
        let mut pre = vec![0.0; x.len()];
        self.maps.iter().any(|m| {
            m.invert_slice(x, &mut pre);
            bbox.contains_with_tol(&pre, 1e-12) && self.attractor_contains(bbox, &pre, depth - 1)
        })
    }

    /// Membership in the image `gamma^i(T)`.
    pub fn image_contains(&self, i: usize, x: &[f64]) -> bool {
        let mut pre = vec![0.0; x.len()];
        self.maps[i].invert_slice(x, &mut pre);
        self.tile_contains(&pre)
    }

    /// `gamma^i` applied to the tile's bounding box.
    pub fn image_box(&self, i: usize) -> AxisBox {
        self.maps[i].image_box(self.tile.bounding_box())
    }

    /// Composes the maps named by `word`, leftmost applied last.
    pub fn compose(&self, word: &[usize]) -> Result<MultiIndexMap> {
        let mut alpha = vec![1.0; self.shape.r()];
        let mut anchor = vec![0.0; self.shape.dim()];
        let mut tmp = vec![0.0; self.shape.dim()];
        for &i in word.iter().rev() {
            let m = self.map(i)?;
            m.apply_slice(&anchor, &mut tmp);
            std::mem::swap(&mut anchor, &mut tmp);
            for (a, b) in alpha.iter_mut().zip(&m.alpha) {
                *a *= b;
            }
        }
        Ok(MultiIndexMap {
            word: word.to_vec(),
            alpha,
            anchor: Point::from_raw(self.shape, anchor),
        })
    }

    /// Number of words of length `p`, checked against `budget`.
    pub fn word_count(&self, p: usize, budget: u128) -> Result<u128> {
        match checked_pow(self.maps.len(), p) {
            Some(n) if n <= budget => Ok(n),
            Some(n) => Err(Error::BudgetExceeded {
                what: "words |I|^p",
                required: n,
                budget,
            }),
            None => Err(Error::BudgetExceeded {
                what: "words |I|^p",
                required: u128::MAX,
                budget,
            }),
        }
    }

    /// All words of length `p` in lexicographic order.
    pub fn enumerate_words(&self, p: usize, budget: u128) -> Result<WordIter<'_>> {
        self.word_count(p, budget)?;
        Ok(WordIter::new(self, p))
    }

    /// Visits `(alpha, anchor)` of every word `prefix ++ w`, `w` of length
    /// `depth`, in lexicographic order, without allocating per word.
    pub(crate) fn visit_words<F>(&self, prefix_alpha: &[f64], prefix_anchor: &[f64], depth: usize, mut visit: F)
    where
        F: FnMut(&[f64], &[f64]),
    {
        let r = self.shape.r();
        let dim = self.shape.dim();
        // level j holds the composition of the prefix with the first j digits
        let mut alphas = vec![0.0; (depth + 1) * r];
        let mut anchors = vec![0.0; (depth + 1) * dim];
        alphas[..r].copy_from_slice(prefix_alpha);
        anchors[..dim].copy_from_slice(prefix_anchor);
        if depth == 0 {
            visit(&alphas[..r], &anchors[..dim]);
            return;
        }
        let mut digits = vec![0usize; depth];
        let mut level = 0;
        loop {
            // extend from `level` to full depth using current digits
            while level < depth {
                let m = &self.maps[digits[level]];
                let (done_a, next_a) = alphas.split_at_mut((level + 1) * r);
                let (done_x, next_x) = anchors.split_at_mut((level + 1) * dim);
                let pa = &done_a[level * r..];
                let px = &done_x[level * dim..];
                // prefix o gamma^i: alpha = pa * alpha_i, anchor = pa * a_i + px
                apply_affine(pa, px, m.offset.as_slice(), &mut next_x[..dim]);
                for n in 0..r {
                    next_a[n] = pa[n] * m.alpha[n];
                }
                level += 1;
            }
            visit(&alphas[depth * r..], &anchors[depth * dim..]);
            // odometer increment
            let mut pos = depth;
            loop {
                if pos == 0 {
                    return;
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < self.maps.len() {
                    break;
                }
                digits[pos] = 0;
            }
            level = pos;
        }
    }

    /// `S_k`: the depth-`k` approximation of the minimal admissible set,
    /// starting from `{0}` and closing under `x -> Pi(gamma^i(0), gamma^i(x))`.
    pub fn minimal_admissible_points(&self, depth: usize, budget: u128) -> Result<Vec<Point>> {
        let key = |v: &[f64]| -> Vec<i64> { v.iter().map(|a| (a / DEDUP_TOLERANCE).round() as i64).collect() };
        let origin = vec![0.0; self.shape.dim()];
        let mut seen: HashSet<Vec<i64>> = HashSet::new();
        seen.insert(key(&origin));
        let mut points = vec![origin];
        let mut frontier = 0..1;
        let mut image = vec![0.0; self.shape.dim()];
        let mut corner = vec![0.0; self.shape.dim()];
        for _ in 0..depth {
            let start = points.len();
            for idx in frontier.clone() {
                for m in &self.maps {
                    m.apply_slice(&points[idx], &mut image);
                    for mask in CornerMask::all(self.shape.r()) {
                        crate::geometry::write_corner(m.offset.as_slice(), &image, self.shape, mask, &mut corner);
                        if seen.insert(key(&corner)) {
                            points.push(corner.clone());
                            if points.len() as u128 > budget {
                                return Err(Error::BudgetExceeded {
                                    what: "admissible points",
                                    required: points.len() as u128,
                                    budget,
                                });
                            }
                        }
                    }
                }
            }
            frontier = start..points.len();
        }
        Ok(points
            .into_iter()
            .map(|v| Point::from_raw(self.shape, v))
            .collect())
    }

    /// Checks the structural hypotheses on the system: contraction, the
    /// weight identity, almost-disjoint tiling, and the lower-set property
    /// of the tile. Monte Carlo estimates use `samples` draws per test.
    pub fn validate_hypotheses(&self, samples: usize, seed: u64) -> HypothesisReport {
        let vol = self.tile.volume();
        let threshold = 1e-9 * vol;
        let samples = samples.max(1);
        let mut rng = sampling::rng(seed);

        let q = self.q();
        let h1 = self.maps.iter().all(|m| m.alpha.iter().all(|&a| a > 0.0 && a < 1.0)) && q < 1.0;
        let beta_sum = self.beta_sum();
        let beta_deviation = (beta_sum - 1.0).abs();

        // images stay inside T
        let images_in_tile = match &self.tile {
            Tile::Box(b) => (0..self.maps.len()).all(|i| {
                let img = self.image_box(i);
                b.contains_with_tol(img.lo().as_slice(), 1e-12) && b.contains_with_tol(img.hi().as_slice(), 1e-12)
            }),
            Tile::Attractor { bounding_box, .. } => (0..self.maps.len()).all(|i| {
                let img = self.image_box(i);
                bounding_box.contains_with_tol(img.lo().as_slice(), 1e-12)
                    && bounding_box.contains_with_tol(img.hi().as_slice(), 1e-12)
            }),
        };

        // pairwise overlaps: exact for boxes, Monte Carlo wherever the
        // bounding images meet in positive volume
        let boxes: Vec<AxisBox> = (0..self.maps.len()).map(|i| self.image_box(i)).collect();
        let mut max_overlap: f64 = 0.0;
        let mut max_exact: Option<f64> = self.tile.as_box().map(|_| 0.0);
        let mut overlapping_pairs = Vec::new();
        for i in 0..self.maps.len() {
            for j in (i + 1)..self.maps.len() {
                let bb = boxes[i].overlap_volume(&boxes[j]);
                if bb <= 0.0 {
                    continue;
                }
                if let Some(e) = max_exact.as_mut() {
                    *e = e.max(bb);
                }
                let mut hits = 0usize;
                let mut img = vec![0.0; self.shape.dim()];
                for _ in 0..samples {
                    let u = self.sample_tile(&mut rng);
                    self.maps[i].apply_slice(&u, &mut img);
                    if self.image_contains(j, &img) {
                        hits += 1;
                    }
                }
                let est = self.maps[i].beta() * vol * hits as f64 / samples as f64;
                if est > threshold || max_exact.is_some_and(|_| bb > threshold) {
                    overlapping_pairs.push(OverlapEntry {
                        first: i,
                        second: j,
                        estimated_volume: est,
                        exact_volume: self.tile.as_box().map(|_| bb),
                    });
                }
                max_overlap = max_overlap.max(est);
            }
        }
        let overlap_ok = max_overlap <= threshold && max_exact.is_none_or(|e| e <= threshold);

        // coverage of T by the images
        let mut misses = 0usize;
        for _ in 0..samples {
            let u = self.sample_tile(&mut rng);
            if !(0..self.maps.len()).any(|i| self.image_contains(i, &u)) {
                misses += 1;
            }
        }
        let coverage_defect = vol * misses as f64 / samples as f64;

        let origin = vec![0.0; self.shape.dim()];
        let contains_origin = self.tile_contains(&origin);

        // H3: T inside the nonnegative orthant and closed under x -> Q(0, x)
        let h3_nonnegative = self.tile.bounding_box().lo().as_slice().iter().all(|&v| v >= 0.0);
        let mut h3_lower_set = h3_nonnegative;
        if let Tile::Box(b) = &self.tile {
            h3_lower_set &= b.lo().as_slice().iter().all(|&v| v == 0.0);
        }
        if h3_lower_set {
            for _ in 0..samples {
                let x = self.sample_tile(&mut rng);
                let y: Vec<f64> = x.iter().map(|&v| if v > 0.0 { rng.gen_range(0.0..v) } else { 0.0 }).collect();
                if !self.tile_contains(&y) {
                    h3_lower_set = false;
                    break;
                }
            }
        }

        let mut report = HypothesisReport {
            map_count: self.maps.len(),
            multilinear_scale: self.multilinear_scale(),
            q,
            h1_contraction: h1,
            beta_sum,
            beta_deviation,
            beta_sum_ok: beta_deviation <= 1e-12,
            max_overlap_volume: max_overlap,
            max_exact_overlap_volume: max_exact,
            overlapping_pairs,
            h2_overlap: overlap_ok,
            coverage_defect,
            h2_coverage: coverage_defect <= threshold,
            h2_images_in_tile: images_in_tile,
            admissible_origin: contains_origin,
            h3_nonnegative,
            h3_lower_set,
            samples,
            seed,
            pass: false,
        };
        report.pass = report.failed_flags().is_empty();
        report
    }

    /// Uniform sample from `T` (rejection from the bounding box for attractors).
    fn sample_tile<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match &self.tile {
            Tile::Box(b) => sampling::in_box(rng, b),
            Tile::Attractor { bounding_box, .. } => {
                for _ in 0..10_000 {
                    let u = sampling::in_box(rng, bounding_box);
                    if self.tile_contains(&u) {
                        return u;
                    }
                }
                bounding_box.lo().as_slice().to_vec()
            }
        }
    }
}

fn detect_exact(maps: &[AffineMap], tile: &Tile) -> Option<ExactForm> {
    const MAX_DEN: i128 = 1_000_000;
    const TOL: f64 = 1e-12;
    let b = tile.bounding_box();
    let rat_all = |v: &[f64]| -> Option<Vec<Ratio<i128>>> { v.iter().map(|&a| rationalize(a, MAX_DEN, TOL)).collect() };
    let mut inv_alpha = Vec::with_capacity(maps.len());
    let mut offsets = Vec::with_capacity(maps.len());
    for m in maps {
        let inv: Option<Vec<i128>> = m
            .alpha
            .iter()
            .map(|&a| {
                let m = (1.0 / a).round();
                ((1.0 / a - m).abs() < 1e-9 && m >= 1.0).then_some(m as i128)
            })
            .collect();
        inv_alpha.push(inv?);
        offsets.push(rat_all(m.offset.as_slice())?);
    }
    Some(ExactForm {
        inv_alpha,
        offsets,
        tile_lo: rat_all(b.lo().as_slice())?,
        tile_hi: rat_all(b.hi().as_slice())?,
    })
}

/// `gamma^i(x) = ((x_l + i_l) / base)_l`, `i` in `{0..base-1}^L`, on `T = [0,1]^L`.
///
/// Map indices enumerate digit vectors lexicographically, first coordinate
/// most significant.
pub fn make_padic(shape: IndexShape, base: usize) -> Result<AffineIFS> {
    if base < 2 {
        return Err(Error::InvalidArgument(format!("p-adic base must be at least 2, got {base}")));
    }
    let dim = shape.dim();
    let count = checked_pow(base, dim).filter(|&n| n <= 1 << 20).ok_or(Error::BudgetExceeded {
        what: "p-adic maps base^(r*s)",
        required: checked_pow(base, dim).unwrap_or(u128::MAX),
        budget: 1 << 20,
    })? as usize;
    let alpha = 1.0 / base as f64;
    let maps = (0..count)
        .map(|idx| {
            let mut digits = vec![0.0; dim];
            let mut rest = idx;
            for slot in digits.iter_mut().rev() {
                *slot = (rest % base) as f64 / base as f64;
                rest /= base;
            }
            AffineMap::new(vec![alpha; shape.r()], Point::from_raw(shape, digits))
        })
        .collect::<Result<Vec<_>>>()?;
    let tile = Tile::Box(AxisBox::unit(shape));
    let mut ifs = AffineIFS::new(shape, maps, tile)?;
    // exact rational form, independent of floating-point detection
    let b = base as i128;
    ifs.exact = Some(ExactForm {
        inv_alpha: vec![vec![b; shape.r()]; count],
        offsets: (0..count)
            .map(|idx| {
                let mut digits = vec![Ratio::zero(); dim];
                let mut rest = idx as i128;
                for slot in digits.iter_mut().rev() {
                    *slot = Ratio::new(rest % b, b);
                    rest /= b;
                }
                digits
            })
            .collect(),
        tile_lo: vec![Ratio::zero(); dim],
        tile_hi: vec![Ratio::from_integer(1); dim],
    });
    Ok(ifs)
}

/// Iterator over all words of a fixed length, lexicographic.
pub struct WordIter<'a> {
    ifs: &'a AffineIFS,
    digits: Vec<usize>,
    done: bool,
}

impl<'a> WordIter<'a> {
    fn new(ifs: &'a AffineIFS, p: usize) -> Self {
        Self {
            ifs,
            digits: vec![0; p],
            done: false,
        }
    }
}

impl Iterator for WordIter<'_> {
    type Item = MultiIndexMap;

    fn next(&mut self) -> Option<MultiIndexMap> {
        if self.done {
            return None;
        }
        let out = self.ifs.compose(&self.digits).expect("digits are valid indices");
        let mut pos = self.digits.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.digits[pos] += 1;
            if self.digits[pos] < self.ifs.len() {
                break;
            }
            self.digits[pos] = 0;
        }
        Some(out)
    }
}

/// One overlapping pair of images.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapEntry {
    pub first: usize,
    pub second: usize,
    pub estimated_volume: f64,
    pub exact_volume: Option<f64>,
}

/// Outcome of [`AffineIFS::validate_hypotheses`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub map_count: usize,
    /// Informational: the factor by which the operator scales multilinear
    /// fields. Multilinear fixed points need it to equal one.
    pub multilinear_scale: f64,
    pub q: f64,
    pub h1_contraction: bool,
    pub beta_sum: f64,
    pub beta_deviation: f64,
    pub beta_sum_ok: bool,
    pub max_overlap_volume: f64,
    pub max_exact_overlap_volume: Option<f64>,
    pub overlapping_pairs: Vec<OverlapEntry>,
    pub h2_overlap: bool,
    pub coverage_defect: f64,
    pub h2_coverage: bool,
    pub h2_images_in_tile: bool,
    pub admissible_origin: bool,
    pub h3_nonnegative: bool,
    pub h3_lower_set: bool,
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
}

impl HypothesisReport {
    /// Names of the checks that failed.
    pub fn failed_flags(&self) -> Vec<&'static str> {
        [
            ("h1_contraction", self.h1_contraction),
            ("beta_sum", self.beta_sum_ok),
            ("h2_overlap", self.h2_overlap),
            ("h2_coverage", self.h2_coverage),
            ("h2_images_in_tile", self.h2_images_in_tile),
            ("admissible_origin", self.admissible_origin),
            ("h3_nonnegative", self.h3_nonnegative),
            ("h3_lower_set", self.h3_lower_set),
        ]
        .into_iter()
        .filter(|(_, ok)| !ok)
        .map(|(name, _)| name)
        .collect()
    }
}

/// Converts an exact rational to `f64`.
pub(crate) fn ratio_to_f64(v: &Ratio<i128>) -> f64 {
    v.numer().to_f64().unwrap_or(f64::NAN) / v.denom().to_f64().unwrap_or(f64::NAN)
}

/// Whether `v` lies in `[lo, hi)`.
pub(crate) fn in_half_open(v: &Ratio<i128>, lo: &Ratio<i128>, hi: &Ratio<i128>) -> bool {
    v >= lo && v < hi
}


/// Closed box from raw corner vectors.
pub fn closed_box(shape: IndexShape, lo: Vec<f64>, hi: Vec<f64>) -> Result<AxisBox> {
    AxisBox::new(Point::new(shape, lo)?, Point::new(shape, hi)?, BoxKind::Closed)
}
