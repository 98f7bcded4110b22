//! Scalar fields `f: V^N -> R` with optional exact derivative information.
//!
//! Differentiation requests follow one pattern: at most one coordinate per
//! group is differentiated, each at most once. A request is a slice of
//! length `r` whose entry `n` is `Some(k)` when coordinate `(n, k)` is
//! differentiated and `None` when group `n` is left alone. The full
//! N-gradient uses `Some` in every slot.

mod builtin;
mod expr;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, IndexShape, MultilinearForm, Point};

pub use builtin::{Factor, Monomial, Polynomial, Separable};
pub use expr::Expression;

/// Per-group differentiation request.
pub type Picks = [Option<usize>];

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type PartialFn = dyn Fn(&Picks, &[f64]) -> f64 + Send + Sync;
type EnvelopeFn = dyn Fn(&AxisBox) -> f64 + Send + Sync;

/// How much regularity a field is known to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    BlackBox,
    /// Every mixed partial with one pick per group exists and is continuous.
    CN,
    Analytic,
}

/// An evaluable real function on `V^N`.
///
/// Cloning is cheap; the callbacks are shared.
#[derive(Clone)]
pub struct ScalarField {
    shape: IndexShape,
    eval: Arc<EvalFn>,
    partial: Option<Arc<PartialFn>>,
    envelope: Option<Arc<EnvelopeFn>>,
    smoothness: Smoothness,
    label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("shape", &self.shape)
            .field("label", &self.label)
            .field("smoothness", &self.smoothness)
            .field("exact_partial", &self.partial.is_some())
            .finish()
    }
}

impl ScalarField {
    /// Black-box field from a closure over the flat coordinate slice.
    pub fn from_fn<F>(shape: IndexShape, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            shape,
            eval: Arc::new(f),
            partial: None,
            envelope: None,
            smoothness: Smoothness::BlackBox,
            label: label.into(),
        }
    }

    /// Attaches an exact mixed-partial callback.
    pub fn with_exact_partial<P>(mut self, partial: P) -> Self
    where
        P: Fn(&Picks, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.partial = Some(Arc::new(partial));
        self
    }

    /// Attaches a bound, valid on any box, for the Frobenius norm of the
    /// derivative of the N-gradient. Used as a Lipschitz envelope for the
    /// modulus of continuity of `grad_N f`.
    pub fn with_gradient_envelope<E>(mut self, envelope: E) -> Self
    where
        E: Fn(&AxisBox) -> f64 + Send + Sync + 'static,
    {
        self.envelope = Some(Arc::new(envelope));
        self
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn shape(&self) -> IndexShape {
        self.shape
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn has_exact_partial(&self) -> bool {
        self.partial.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &Point) -> f64 {
        debug_assert_eq!(x.shape(), self.shape);
        (self.eval)(x.as_slice())
    }

    /// Evaluation on a flat group-major coordinate slice.
    #[inline]
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Exact mixed partial, when the field carries one.
    pub fn exact_partial(&self, picks: &Picks, x: &[f64]) -> Option<f64> {
        self.partial.as_ref().map(|p| p(picks, x))
    }

    /// Lipschitz envelope of `grad_N f` on `region`, when known.
    pub fn gradient_envelope(&self, region: &AxisBox) -> Option<f64> {
        self.envelope.as_ref().map(|e| e(region))
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField> {
        self.shape.check_same(&other.shape)?;
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let mut out = ScalarField::from_fn(
            self.shape,
            format!("{a}*({}) + {b}*({})", self.label, other.label),
            move |x| a * f(x) + b * g(x),
        );
        out.smoothness = self.smoothness.min_grade(other.smoothness);
        if let (Some(pf), Some(pg)) = (self.partial.clone(), other.partial.clone()) {
            out.partial = Some(Arc::new(move |k: &Picks, x: &[f64]| a * pf(k, x) + b * pg(k, x)));
        }
        if let (Some(ef), Some(eg)) = (self.envelope.clone(), other.envelope.clone()) {
            out.envelope = Some(Arc::new(move |bx: &AxisBox| a.abs() * ef(bx) + b.abs() * eg(bx)));
        }
        Ok(out)
    }

    /// The zero field.
    pub fn zero(shape: IndexShape) -> ScalarField {
        make_multilinear(&MultilinearForm::zeros(shape))
    }

    /// A constant field.
    pub fn constant(shape: IndexShape, c: f64) -> ScalarField {
        ScalarField::from_fn(shape, format!("{c}"), move |_| c)
            .with_exact_partial(move |k: &Picks, _| if k.iter().all(Option::is_none) { c } else { 0.0 })
            .with_gradient_envelope(|_| 0.0)
            .with_smoothness(Smoothness::Analytic)
    }

    /// Field from a parsed arithmetic expression (black box, finite differences only).
    pub fn from_expression(shape: IndexShape, source: &str) -> Result<ScalarField> {
        let e = Expression::parse(source, shape)?;
        Ok(ScalarField::from_fn(shape, source, move |x| e.eval(x)))
    }
}

impl Smoothness {
    fn rank(self) -> u8 {
        match self {
            Smoothness::BlackBox => 0,
            Smoothness::CN => 1,
            Smoothness::Analytic => 2,
        }
    }

    fn min_grade(self, other: Smoothness) -> Smoothness {
        if self.rank() <= other.rank() {
            self
        } else {
            other
        }
    }
}

/// `x -> lambda x^N` with exact partials.
pub fn make_multilinear(form: &MultilinearForm) -> ScalarField {
    let shape = form.shape();
    let eval_form = form.clone();
    let partial_form = form.clone();
    ScalarField::from_fn(shape, "multilinear", move |x| eval_form.eval_slice(x))
        .with_exact_partial(move |picks, x| multilinear_partial(&partial_form, picks, x))
        .with_gradient_envelope(|_| 0.0)
        .with_smoothness(Smoothness::Analytic)
}

/// Partial of `lambda x^N`: sum over multi-indices agreeing with the picks,
/// unpicked groups contribute their coordinate.
fn multilinear_partial(form: &MultilinearForm, picks: &Picks, x: &[f64]) -> f64 {
    let shape = form.shape();
    let s = shape.s();
    shape
        .multi_indices()
        .filter(|k| picks.iter().zip(k).all(|(p, kn)| p.is_none_or(|pk| pk == *kn)))
        .map(|k| {
            let mono: f64 = k
                .iter()
                .enumerate()
                .filter(|(n, _)| picks[*n].is_none())
                .map(|(n, kn)| x[n * s + kn])
                .product();
            form.coeff(&k) * mono
        })
        .sum()
}

/// `f_x`: freezes the groups named in `fixed` and returns the field on the
/// remaining groups (kept in ascending order).
pub fn restrict(f: &ScalarField, fixed: &[(usize, Vec<f64>)]) -> Result<ScalarField> {
    let shape = f.shape;
    let (r, s) = (shape.r(), shape.s());
    if fixed.is_empty() || fixed.len() >= r {
        return Err(Error::InvalidArgument(format!(
            "restriction must fix a nonempty proper subset of the {r} groups"
        )));
    }
    let mut frozen: Vec<Option<Vec<f64>>> = vec![None; r];
    for (n, v) in fixed {
        shape.check_group(*n)?;
        if v.len() != s {
            return Err(Error::LengthMismatch { expected: s, got: v.len() });
        }
        if frozen[*n].is_some() {
            return Err(Error::InvalidArgument(format!("group {n} fixed twice")));
        }
        if let Some((position, &value)) = v.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return Err(Error::NonFinite { position, value });
        }
        frozen[*n] = Some(v.clone());
    }
    let free: Vec<usize> = (0..r).filter(|n| frozen[*n].is_none()).collect();
    let new_shape = IndexShape::new(free.len(), s)?;

    let mut template = vec![0.0; r * s];
    for (n, v) in frozen.iter().enumerate() {
        if let Some(v) = v {
            template[n * s..(n + 1) * s].copy_from_slice(v);
        }
    }
    let merge = {
        let free = free.clone();
        let template = template.clone();
        move |y: &[f64]| {
            let mut full = template.clone();
            for (j, &n) in free.iter().enumerate() {
                full[n * s..(n + 1) * s].copy_from_slice(&y[j * s..(j + 1) * s]);
            }
            full
        }
    };
    let inner = f.eval.clone();
    let merge_eval = merge.clone();
    let mut out = ScalarField::from_fn(new_shape, format!("{}|restricted", f.label), move |y| {
        inner(&merge_eval(y))
    });
    out.smoothness = f.smoothness;
    if let Some(p) = f.partial.clone() {
        let free = free.clone();
        out.partial = Some(Arc::new(move |picks: &Picks, y: &[f64]| {
            let mut full_picks = vec![None; r];
            for (j, &n) in free.iter().enumerate() {
                full_picks[n] = picks[j];
            }
            p(&full_picks, &merge(y))
        }));
    }
    Ok(out)
}

/// Built-in field families as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `lambda x^N`, coefficients in mixed-radix order.
    Multilinear { coeffs: Vec<f64> },
    /// Sum of monomials `c * prod_l x_l^{e_l}` (exponents over all `r*s` coordinates).
    CoordinatePolynomial { terms: Vec<Monomial> },
    /// `amplitude * prod_l sin(omega_l x_l)`.
    ProductSine {
        frequencies: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `coefficient * prod_l phi_l(x_l)` with one factor per coordinate.
    Separable {
        #[serde(default = "one")]
        coefficient: f64,
        factors: Vec<Factor>,
    },
    /// Arithmetic expression; differentiated numerically.
    Expression { expr: String },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn build(&self, shape: IndexShape) -> Result<ScalarField> {
        match self {
            FieldSpec::Multilinear { coeffs } => {
                Ok(make_multilinear(&MultilinearForm::new(shape, coeffs.clone())?))
            }
            FieldSpec::CoordinatePolynomial { terms } => {
                Ok(Polynomial::new(shape, terms.clone())?.into_field())
            }
            FieldSpec::ProductSine {
                frequencies,
                amplitude,
            } => Ok(Separable::product_sine(shape, frequencies, *amplitude)?.into_field()),
            FieldSpec::Separable {
                coefficient,
                factors,
            } => Ok(Separable::new(shape, *coefficient, factors.clone())?.into_field()),
            FieldSpec::Expression { expr } => ScalarField::from_expression(shape, expr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(r: usize, s: usize) -> IndexShape {
        IndexShape::new(r, s).unwrap()
    }

    #[test]
    fn multilinear_examples() {
        let f = make_multilinear(&MultilinearForm::new(shape(2, 1), vec![1.0]).unwrap());
        assert_eq!(f.eval_slice(&[2.0, 3.0]), 6.0);

        let z = ScalarField::zero(shape(2, 2));
        assert_eq!(z.eval_slice(&[1.0, 2.0, 3.0, 4.0]), 0.0);

        let f = make_multilinear(&MultilinearForm::new(shape(1, 2), vec![2.0, -5.0]).unwrap());
        assert_eq!(f.eval_slice(&[3.0, 1.0]), 2.0 * 3.0 - 5.0);
        assert_eq!(f.smoothness(), Smoothness::Analytic);
    }

    #[test]
    fn multilinear_partials() {
        let lam = MultilinearForm::new(shape(2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let f = make_multilinear(&lam);
        let x = [0.3, 0.7, -1.1, 2.5];
        for k in shape(2, 2).multi_indices() {
            let picks: Vec<_> = k.iter().map(|&kn| Some(kn)).collect();
            assert_eq!(f.exact_partial(&picks, &x).unwrap(), lam.coeff(&k));
        }
        // d/dx_{0,1} of sum_k lambda_k x_{0,k0} x_{1,k1} = lambda_{1,0} x_{1,0} + lambda_{1,1} x_{1,1}
        let got = f.exact_partial(&[Some(1), None], &x).unwrap();
        assert!((got - (3.0 * -1.1 + 4.0 * 2.5)).abs() < 1e-14);
        // no picks: the value itself
        let got = f.exact_partial(&[None, None], &x).unwrap();
        assert!((got - f.eval_slice(&x)).abs() < 1e-14);
    }

    #[test]
    fn restrict_examples() {
        let f = ScalarField::from_expression(shape(2, 1), "x1^2 * x2").unwrap();
        let g = restrict(&f, &[(1, vec![1.0])]).unwrap();
        assert_eq!(g.shape(), shape(1, 1));
        for t in [0.0, 0.5, 2.0] {
            assert_eq!(g.eval_slice(&[t]), t * t);
        }

        let f = ScalarField::from_expression(shape(3, 2), "x1_1 + 2*x2_2*x3_1 - x3_2^3").unwrap();
        let g = restrict(&f, &[(1, vec![0.4, -0.9])]).unwrap();
        let y = [0.1, 0.2, 0.3, 0.4];
        let merged = [0.1, 0.2, 0.4, -0.9, 0.3, 0.4];
        assert_eq!(g.eval_slice(&y), f.eval_slice(&merged));
    }

    #[test]
    fn restrict_rejects_all_or_none() {
        let f = ScalarField::zero(shape(2, 1));
        assert!(restrict(&f, &[]).is_err());
        assert!(restrict(&f, &[(0, vec![0.0]), (1, vec![0.0])]).is_err());
        assert!(restrict(&f, &[(2, vec![0.0])]).is_err());
        assert!(restrict(&f, &[(0, vec![0.0, 1.0])]).is_err());
    }

    #[test]
    fn restricted_multilinear_stays_multilinear() {
        // lambda x^N with group 0 frozen at v is multilinear in the remaining
        // groups with coefficients mu_{k'} = sum_{k0} lambda_{k0,k'} v_{k0}.
        let sh = shape(3, 2);
        let coeffs: Vec<f64> = (0..8).map(|i| (i as f64) * 0.5 - 1.0).collect();
        let lam = MultilinearForm::new(sh, coeffs).unwrap();
        let v = vec![0.7, -0.2];
        let g = restrict(&make_multilinear(&lam), &[(0, v.clone())]).unwrap();
        let sub = shape(2, 2);
        let mu: Vec<f64> = sub
            .multi_indices()
            .map(|kp| (0..2).map(|k0| lam.coeff(&[k0, kp[0], kp[1]]) * v[k0]).sum())
            .collect();
        let mu = MultilinearForm::new(sub, mu).unwrap();
        let y = Point::new(sub, vec![0.3, 1.2, -0.4, 0.9]).unwrap();
        assert!((g.eval(&y) - mu.eval(&y).unwrap()).abs() < 1e-14);
        // separately linear: scaling one remaining group scales the value
        let y2 = Point::new(sub, vec![0.9, 3.6, -0.4, 0.9]).unwrap();
        assert!((g.eval(&y2) - 3.0 * g.eval(&y)).abs() < 1e-13);
        // restricted exact partial recovers mu
        for kp in sub.multi_indices() {
            let picks = [Some(kp[0]), Some(kp[1])];
            assert!((g.exact_partial(&picks, y.as_slice()).unwrap() - mu.coeff(&kp)).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_combination_carries_partials() {
        let sh = shape(2, 1);
        let f = make_multilinear(&MultilinearForm::new(sh, vec![2.0]).unwrap());
        let g = ScalarField::constant(sh, 5.0);
        let h = f.linear_combination(3.0, &g, -1.0).unwrap();
        assert_eq!(h.eval_slice(&[1.0, 2.0]), 3.0 * 4.0 - 5.0);
        assert_eq!(h.exact_partial(&[Some(0), Some(0)], &[1.0, 2.0]), Some(6.0));
        let e = ScalarField::from_expression(sh, "x1").unwrap();
        assert!(!f.linear_combination(1.0, &e, 1.0).unwrap().has_exact_partial());
    }

    #[test]
    fn field_spec_parses_from_toml() {
        let spec: FieldSpec = toml::from_str(
            r#"
            kind = "coordinate_polynomial"
            terms = [{ coeff = 1.0, exponents = [2, 1] }]
            "#,
        )
        .unwrap();
        let f = spec.build(shape(2, 1)).unwrap();
        assert_eq!(f.eval_slice(&[0.5, 0.3]), 0.25 * 0.3);
        assert!(f.has_exact_partial());

        let spec: FieldSpec = toml::from_str("kind = \"product_sine\"\nfrequencies = [1.0, 2.0]").unwrap();
        let f = spec.build(shape(1, 2)).unwrap();
        assert!((f.eval_slice(&[0.3, 0.4]) - 0.3f64.sin() * 0.8f64.sin()).abs() < 1e-15);

        let spec: FieldSpec = toml::from_str("kind = \"expression\"\nexpr = \"x1*x2\"").unwrap();
        assert!(!spec.build(shape(2, 1)).unwrap().has_exact_partial());

        let spec: FieldSpec = toml::from_str("kind = \"multilinear\"\ncoeffs = [1.0]").unwrap();
        assert!(spec.build(shape(1, 2)).is_err());
    }
}
