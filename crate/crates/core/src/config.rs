//! Experiment configuration: one TOML file describing the shape, the
//! system, the field or distribution, and per-command parameters.
//!
//! ```toml
//! seed = 7
//!
//! [shape]
//! r = 1
//! s = 1
//!
//! [ifs]
//! kind = "padic"
//! base = 2
//!
//! [field]
//! kind = "coordinate_polynomial"
//! terms = [{ coeff = 1.0, exponents = [2] }]
//!
//! [iterate]
//! depths = [0, 1, 2, 3]
//! points = { points_per_axis = 11 }
//! ```

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{FieldSpec, ScalarField};
use crate::geometry::{AxisBox, BoxKind, IndexShape, Point};
use crate::gradient::QuadratureSpec;
use crate::ifs::{make_padic, AffineIFS, AffineMap, Tile, DEFAULT_BUDGET};
use crate::measure::{DistributionMeasure, DistributionSpec, InvarianceMethod};
use crate::numeric::linspace;

/// Hard ceiling on every user-supplied budget.
pub const MAX_BUDGET: u128 = 1 << 36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeConfig {
    pub r: usize,
    pub s: usize,
}

/// One explicit map `x -> (alpha_n x_n + a_n)_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    /// One factor per group.
    pub alpha: Vec<f64>,
    /// `gamma(0)`, group-major.
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TileConfig {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// A tile known by a bounding box and its volume.
    Attractor { lo: Vec<f64>, hi: Vec<f64>, volume: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IfsConfig {
    Padic { base: usize },
    Explicit { maps: Vec<MapConfig>, tile: TileConfig },
}

/// Evaluation points: an explicit list, a grid over the tile's bounding box, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PointsConfig {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    pub points_per_axis: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Words,
    Composition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    pub depths: Vec<usize>,
    #[serde(default)]
    pub points: PointsConfig,
    #[serde(default)]
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitConfig {
    #[serde(default)]
    pub points: PointsConfig,
    #[serde(default = "default_limit_tol")]
    pub tol: f64,
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    /// Quadrature for the reported average gradient.
    pub quadrature: Option<QuadratureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointConfig {
    #[serde(default)]
    pub points: PointsConfig,
    #[serde(default = "default_fixed_tol")]
    pub tol: f64,
    pub fit_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceConfig {
    #[serde(default = "default_fixed_tol")]
    pub tol: f64,
    #[serde(default = "default_grid")]
    pub points_per_axis: usize,
    #[serde(default = "all_methods")]
    pub methods: Vec<InvarianceMethod>,
}

/// A coordinate given as a number or as exact decimal text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coordinate {
    Number(f64),
    Text(String),
}

impl Coordinate {
    /// Decimal text: the literal for strings, the shortest round-trip form for numbers.
    pub fn decimal_text(&self) -> String {
        match self {
            Coordinate::Number(v) => v.to_string(),
            Coordinate::Text(t) => t.trim().to_string(),
        }
    }

    pub fn to_f64(&self) -> Result<f64> {
        match self {
            Coordinate::Number(v) => Ok(*v),
            Coordinate::Text(t) => t
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("not a number: {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitConfig {
    pub x0: Vec<Coordinate>,
    pub steps: usize,
    #[serde(default = "default_bins")]
    pub bins_per_axis: usize,
    #[serde(default = "default_keep")]
    pub keep: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleConfig {
    pub depth: usize,
}

fn default_samples() -> usize {
    20_000
}
fn default_limit_tol() -> f64 {
    1e-8
}
fn default_p_max() -> usize {
    30
}
fn default_fixed_tol() -> f64 {
    1e-10
}
fn default_grid() -> usize {
    11
}
fn all_methods() -> Vec<InvarianceMethod> {
    InvarianceMethod::ALL.to_vec()
}
fn default_bins() -> usize {
    8
}
fn default_keep() -> usize {
    100
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub budget: Option<u128>,
    pub shape: ShapeConfig,
    pub ifs: IfsConfig,
    pub field: Option<FieldSpec>,
    pub distribution: Option<DistributionSpec>,
    pub validate: Option<ValidateConfig>,
    pub iterate: Option<IterateConfig>,
    pub limit: Option<LimitConfig>,
    pub fixed_point: Option<FixedPointConfig>,
    pub invariance: Option<InvarianceConfig>,
    pub orbit: Option<OrbitConfig>,
    pub admissible: Option<AdmissibleConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every numeric parameter against its documented range.
    pub fn validate(&self) -> Result<()> {
        let shape = self.index_shape()?;
        if let Some(b) = self.budget {
            if b == 0 || b > MAX_BUDGET {
                return Err(Error::Config(format!("budget must be in 1..={MAX_BUDGET}, got {b}")));
            }
        }
        if let IfsConfig::Padic { base } = self.ifs {
            if !(2..=16).contains(&base) {
                return Err(Error::Config(format!("p-adic base must be in 2..=16, got {base}")));
            }
        }
        if let Some(v) = &self.validate {
            check_range("validate.samples", v.samples as u128, 1, 10_000_000)?;
        }
        if let Some(it) = &self.iterate {
            if it.depths.is_empty() {
                return Err(Error::Config("iterate.depths is empty".into()));
            }
            check_range("iterate.depths", *it.depths.iter().max().unwrap() as u128, 0, 64)?;
            check_points("iterate.points", &it.points, shape)?;
        }
        if let Some(l) = &self.limit {
            check_positive("limit.tol", l.tol)?;
            check_range("limit.p_max", l.p_max as u128, 0, 64)?;
            check_points("limit.points", &l.points, shape)?;
        }
        if let Some(fp) = &self.fixed_point {
            check_positive("fixed_point.tol", fp.tol)?;
            check_points("fixed_point.points", &fp.points, shape)?;
        }
        if let Some(inv) = &self.invariance {
            check_positive("invariance.tol", inv.tol)?;
            check_range("invariance.points_per_axis", inv.points_per_axis as u128, 2, 10_000)?;
            if inv.methods.is_empty() {
                return Err(Error::Config("invariance.methods is empty".into()));
            }
        }
        if let Some(o) = &self.orbit {
            check_range("orbit.steps", o.steps as u128, 1, 100_000_000)?;
            check_range("orbit.bins_per_axis", o.bins_per_axis as u128, 1, 4096)?;
            if o.x0.len() != shape.dim() {
                return Err(Error::Config(format!(
                    "orbit.x0 needs {} coordinates, got {}",
                    shape.dim(),
                    o.x0.len()
                )));
            }
        }
        if let Some(a) = &self.admissible {
            check_range("admissible.depth", a.depth as u128, 0, 64)?;
        }
        Ok(())
    }

    pub fn index_shape(&self) -> Result<IndexShape> {
        IndexShape::new(self.shape.r, self.shape.s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn budget(&self) -> u128 {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }

    pub fn build_ifs(&self) -> Result<AffineIFS> {
        let shape = self.index_shape()?;
        let wrap = |e: Error| Error::Config(format!("ifs: {e}"));
        match &self.ifs {
            IfsConfig::Padic { base } => make_padic(shape, *base).map_err(wrap),
            IfsConfig::Explicit { maps, tile } => {
                let maps = maps
                    .iter()
                    .map(|m| AffineMap::new(m.alpha.clone(), Point::new(shape, m.a.clone())?))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?;
                let tile = match tile {
                    TileConfig::Box { lo, hi } => Tile::Box(make_box(shape, lo, hi).map_err(wrap)?),
                    TileConfig::Attractor { lo, hi, volume } => Tile::Attractor {
                        bounding_box: make_box(shape, lo, hi).map_err(wrap)?,
                        volume: *volume,
                    },
                };
                AffineIFS::new(shape, maps, tile).map_err(wrap)
            }
        }
    }

    pub fn build_field(&self) -> Result<ScalarField> {
        let spec = self
            .field
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [field] section".into()))?;
        spec.build(self.index_shape()?)
            .map_err(|e| Error::Config(format!("field: {e}")))
    }

    pub fn build_distribution(&self) -> Result<DistributionMeasure> {
        let spec = self
            .distribution
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [distribution] section".into()))?;
        spec.build(self.index_shape()?)
            .map_err(|e| Error::Config(format!("distribution: {e}")))
    }
}

fn make_box(shape: IndexShape, lo: &[f64], hi: &[f64]) -> Result<AxisBox> {
    AxisBox::new(Point::new(shape, lo.to_vec())?, Point::new(shape, hi.to_vec())?, BoxKind::Closed)
}

fn check_range(name: &str, v: u128, lo: u128, hi: u128) -> Result<()> {
    if v < lo || v > hi {
        return Err(Error::Config(format!("{name} must be in {lo}..={hi}, got {v}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_points(name: &str, p: &PointsConfig, shape: IndexShape) -> Result<()> {
    if p.points.is_empty() && p.points_per_axis.is_none() {
        return Err(Error::Config(format!("{name}: give `points` or `points_per_axis`")));
    }
    if let Some(n) = p.points_per_axis {
        check_range(&format!("{name}.points_per_axis"), n as u128, 1, 10_000)?;
        let total = crate::numeric::checked_pow(n, shape.dim()).unwrap_or(u128::MAX);
        check_range(&format!("{name} grid size"), total, 1, 1_000_000)?;
    }
    if let Some(bad) = p.points.iter().find(|v| v.len() != shape.dim()) {
        return Err(Error::Config(format!(
            "{name}: points need {} coordinates, got {}",
            shape.dim(),
            bad.len()
        )));
    }
    Ok(())
}

/// Explicit points followed by the grid (first coordinate slowest) over `region`.
pub fn resolve_points(cfg: &PointsConfig, region: &AxisBox) -> Result<Vec<Point>> {
    let shape = region.shape();
    let mut out: Vec<Point> = cfg
        .points
        .iter()
        .map(|v| Point::new(shape, v.clone()))
        .collect::<Result<_>>()?;
    if let Some(n) = cfg.points_per_axis {
        let axes: Vec<Vec<f64>> = (0..shape.dim())
            .map(|l| {
                let (lo, hi) = (region.lo().as_slice()[l], region.hi().as_slice()[l]);
                if n == 1 {
                    vec![lo]
                } else {
                    linspace(lo, hi, n)
                }
            })
            .collect();
        let total: usize = axes.iter().map(Vec::len).product();
        for idx in 0..total {
            let mut rest = idx;
            let mut v = vec![0.0; shape.dim()];
            for l in (0..shape.dim()).rev() {
                v[l] = axes[l][rest % n];
                rest /= n;
            }
            out.push(Point::new(shape, v)?);
        }
    }
    Ok(out)
}
