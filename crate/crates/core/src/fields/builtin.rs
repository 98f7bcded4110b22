//! Built-in field families with exact partials and gradient envelopes.

use serde::{Deserialize, Serialize};

use super::{Picks, ScalarField, Smoothness};
use crate::error::{Error, Result};
use crate::geometry::{AxisBox, IndexShape};

/// `coeff * prod_l x_l^{exponents[l]}` over all `r*s` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl Monomial {
    fn eval(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .fold(self.coeff, |acc, (&e, &v)| if e == 0 { acc } else { acc * v.powi(e as i32) })
    }

    /// Derivative with respect to the listed coordinates (repeats allowed).
    fn differentiate(&self, coords: &[usize]) -> Option<Monomial> {
        let mut out = self.clone();
        for &l in coords {
            let e = out.exponents[l];
            if e == 0 {
                return None;
            }
            out.coeff *= e as f64;
            out.exponents[l] = e - 1;
        }
        Some(out)
    }

    fn abs_bound(&self, region: &AxisBox) -> f64 {
        let lo = region.lo().as_slice();
        let hi = region.hi().as_slice();
        self.exponents.iter().enumerate().fold(self.coeff.abs(), |acc, (l, &e)| {
            acc * lo[l].abs().max(hi[l].abs()).powi(e as i32)
        })
    }

    /// True when every group contributes exactly one coordinate of degree one.
    pub fn is_multilinear(&self, shape: IndexShape) -> bool {
        let s = shape.s();
        (0..shape.r()).all(|n| {
            let g = &self.exponents[n * s..(n + 1) * s];
            g.iter().all(|&e| e <= 1) && g.iter().sum::<u32>() == 1
        })
    }
}

/// Polynomial in the `r*s` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    shape: IndexShape,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(shape: IndexShape, terms: Vec<Monomial>) -> Result<Self> {
        for t in &terms {
            if t.exponents.len() != shape.dim() {
                return Err(Error::LengthMismatch {
                    expected: shape.dim(),
                    got: t.exponents.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(Error::NonFinite {
                    position: 0,
                    value: t.coeff,
                });
            }
        }
        Ok(Self { shape, terms })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    fn picked_coords(&self, picks: &Picks) -> Vec<usize> {
        let s = self.shape.s();
        picks
            .iter()
            .enumerate()
            .filter_map(|(n, p)| p.map(|k| n * s + k))
            .collect()
    }

    pub fn partial(&self, picks: &Picks, x: &[f64]) -> f64 {
        let coords = self.picked_coords(picks);
        self.terms
            .iter()
            .filter_map(|t| t.differentiate(&coords))
            .map(|t| t.eval(x))
            .sum()
    }

    /// Frobenius bound of `D(grad_N f)` over `region`.
    pub fn gradient_envelope(&self, region: &AxisBox) -> f64 {
        let shape = self.shape;
        let mut total = 0.0;
        for k in shape.multi_indices() {
            let picks: Vec<Option<usize>> = k.iter().map(|&kn| Some(kn)).collect();
            let base = self.picked_coords(&picks);
            for l in 0..shape.dim() {
                let mut coords = base.clone();
                coords.push(l);
                let bound: f64 = self
                    .terms
                    .iter()
                    .filter_map(|t| t.differentiate(&coords))
                    .map(|t| t.abs_bound(region))
                    .sum();
                total += bound * bound;
            }
        }
        total.sqrt()
    }

    pub fn is_multilinear(&self) -> bool {
        self.terms.iter().all(|t| t.is_multilinear(self.shape))
    }

    pub fn into_field(self) -> ScalarField {
        let (e, p, g) = (self.clone(), self.clone(), self.clone());
        ScalarField::from_fn(self.shape, "polynomial", move |x| e.eval(x))
            .with_exact_partial(move |k, x| p.partial(k, x))
            .with_gradient_envelope(move |b| g.gradient_envelope(b))
            .with_smoothness(Smoothness::Analytic)
    }
}

/// One-variable factor of a separable field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Factor {
    Power { exponent: u32 },
    Sin { omega: f64 },
    Cos { omega: f64 },
    Exp { rate: f64 },
}

impl Factor {
    /// `order`-th derivative at `t`.
    pub fn derivative(&self, order: u32, t: f64) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        match *self {
            Factor::Power { exponent } => {
                if order > exponent {
                    0.0
                } else {
                    falling(exponent, order) * t.powi((exponent - order) as i32)
                }
            }
            Factor::Sin { omega } => omega.powi(order as i32) * (omega * t + order as f64 * FRAC_PI_2).sin(),
            Factor::Cos { omega } => omega.powi(order as i32) * (omega * t + order as f64 * FRAC_PI_2).cos(),
            Factor::Exp { rate } => rate.powi(order as i32) * (rate * t).exp(),
        }
    }

    /// Upper bound of `|order-th derivative|` on `[lo, hi]`.
    pub fn abs_bound(&self, order: u32, lo: f64, hi: f64) -> f64 {
        match *self {
            Factor::Power { exponent } => {
                if order > exponent {
                    0.0
                } else {
                    falling(exponent, order) * lo.abs().max(hi.abs()).powi((exponent - order) as i32)
                }
            }
            Factor::Sin { omega } | Factor::Cos { omega } => omega.abs().powi(order as i32),
            Factor::Exp { rate } => rate.abs().powi(order as i32) * (rate * lo).exp().max((rate * hi).exp()),
        }
    }

    fn is_finite(&self) -> bool {
        match *self {
            Factor::Power { .. } => true,
            Factor::Sin { omega } | Factor::Cos { omega } => omega.is_finite(),
            Factor::Exp { rate } => rate.is_finite(),
        }
    }
}

fn falling(e: u32, order: u32) -> f64 {
    (0..order).map(|j| (e - j) as f64).product()
}

/// `coefficient * prod_l phi_l(x_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable {
    shape: IndexShape,
    coefficient: f64,
    factors: Vec<Factor>,
}

impl Separable {
    pub fn new(shape: IndexShape, coefficient: f64, factors: Vec<Factor>) -> Result<Self> {
        if factors.len() != shape.dim() {
            return Err(Error::LengthMismatch {
                expected: shape.dim(),
                got: factors.len(),
            });
        }
        if !coefficient.is_finite() || factors.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidArgument("separable field parameters must be finite".into()));
        }
        Ok(Self {
            shape,
            coefficient,
            factors,
        })
    }

    /// `amplitude * prod_l sin(omega_l x_l)`.
    pub fn product_sine(shape: IndexShape, frequencies: &[f64], amplitude: f64) -> Result<Self> {
        let factors = frequencies.iter().map(|&omega| Factor::Sin { omega }).collect();
        Self::new(shape, amplitude, factors)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .zip(x)
            .fold(self.coefficient, |acc, (f, &t)| acc * f.derivative(0, t))
    }

    fn orders(&self, picks: &Picks) -> Vec<u32> {
        let s = self.shape.s();
        let mut orders = vec![0u32; self.shape.dim()];
        for (n, p) in picks.iter().enumerate() {
            if let Some(k) = p {
                orders[n * s + k] += 1;
            }
        }
        orders
    }

    pub fn partial(&self, picks: &Picks, x: &[f64]) -> f64 {
        let orders = self.orders(picks);
        self.factors
            .iter()
            .zip(x)
            .zip(&orders)
            .fold(self.coefficient, |acc, ((f, &t), &o)| acc * f.derivative(o, t))
    }

    pub fn gradient_envelope(&self, region: &AxisBox) -> f64 {
        let lo = region.lo().as_slice();
        let hi = region.hi().as_slice();
        let mut total = 0.0;
        for k in self.shape.multi_indices() {
            let picks: Vec<Option<usize>> = k.iter().map(|&kn| Some(kn)).collect();
            let base = self.orders(&picks);
            for l in 0..self.shape.dim() {
                let mut orders = base.clone();
                orders[l] += 1;
                let b: f64 = self
                    .factors
                    .iter()
                    .enumerate()
                    .map(|(j, f)| f.abs_bound(orders[j], lo[j], hi[j]))
                    .product::<f64>()
                    * self.coefficient.abs();
                total += b * b;
            }
        }
        total.sqrt()
    }

    pub fn into_field(self) -> ScalarField {
        let (e, p, g) = (self.clone(), self.clone(), self.clone());
        ScalarField::from_fn(self.shape, "separable", move |x| e.eval(x))
            .with_exact_partial(move |k, x| p.partial(k, x))
            .with_gradient_envelope(move |b| g.gradient_envelope(b))
            .with_smoothness(Smoothness::Analytic)
    }
}
