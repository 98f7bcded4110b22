//! The multidimensional increment `□f(x, y)` and N-dimensional Lipschitz estimates.

use crate::error::{Error, Result};
use crate::fields::{restrict, ScalarField};
use crate::geometry::{group_norm_product, write_corner, AxisBox, CornerMask, IndexShape, Point};
use crate::numeric::CompensatedSum;
use crate::sampling;

/// `□f(x, y) = sum_{M ⊆ N} (-1)^{|M|} f(pi_M(x, y))`.
///
/// Corners are visited in ascending mask order and accumulated with
/// compensated summation.
pub fn increment(f: &ScalarField, x: &Point, y: &Point) -> Result<f64> {
    f.shape().check_same(&x.shape())?;
    f.shape().check_same(&y.shape())?;
    let mut buf = vec![0.0; f.shape().dim()];
    Ok(increment_with(f.shape(), x.as_slice(), y.as_slice(), &mut buf, |p| f.eval_slice(p)))
}

/// Corner sum over flat slices with a caller-supplied evaluator.
pub(crate) fn increment_with<F>(shape: IndexShape, x: &[f64], y: &[f64], buf: &mut [f64], mut eval: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut acc = CompensatedSum::new();
    for mask in CornerMask::all(shape.r()) {
        write_corner(x, y, shape, mask, buf);
        acc.add(mask.sign() * eval(buf));
    }
    acc.value()
}

/// Increment computed through the difference of two `(r-1)`-group
/// increments of the restrictions `f_{y_m:m}` and `f_{x_m:m}`.
pub fn increment_inductive(f: &ScalarField, x: &Point, y: &Point, m: usize) -> Result<f64> {
    let shape = f.shape();
    shape.check_same(&x.shape())?;
    shape.check_same(&y.shape())?;
    if shape.r() < 2 {
        return Err(Error::InvalidArgument("inductive increment needs r >= 2".into()));
    }
    shape.check_group(m)?;
    let rest: Vec<usize> = (0..shape.r()).filter(|&n| n != m).collect();
    let x_rest = x.restrict(&rest)?;
    let y_rest = y.restrict(&rest)?;
    let upper = restrict(f, &[(m, y.group(m).to_vec())])?;
    let lower = restrict(f, &[(m, x.group(m).to_vec())])?;
    Ok(increment(&upper, &x_rest, &y_rest)? - increment(&lower, &x_rest, &y_rest)?)
}

/// `|□f(x, y)| / ||x - y||^N`.
pub fn lipschitz_ratio(f: &ScalarField, x: &Point, y: &Point) -> Result<f64> {
    let denom = group_norm_product(&x.sub(y)?);
    if denom == 0.0 {
        return Err(Error::DegeneratePair);
    }
    Ok(increment(f, x, y)?.abs() / denom)
}

/// Empirical supremum of [`lipschitz_ratio`] over `samples` random pairs in
/// `region`. Pairs with a coinciding group are redrawn. The result is a lower
/// bound for the N-dimensional Lipschitz constant.
pub fn estimate_ndim_lipschitz_constant(f: &ScalarField, region: &AxisBox, samples: usize, seed: u64) -> Result<f64> {
    f.shape().check_same(&region.shape())?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let shape = f.shape();
    let mut rng = sampling::rng(seed);
    let mut best: f64 = 0.0;
    let mut drawn = 0usize;
    let mut attempts = 0usize;
    while drawn < samples {
        attempts += 1;
        if attempts > samples.saturating_mul(100) {
            return Err(Error::InvalidArgument(
                "region too thin: could not draw nondegenerate pairs".into(),
            ));
        }
        let x = Point::from_raw(shape, sampling::in_box(&mut rng, region));
        let y = Point::from_raw(shape, sampling::in_box(&mut rng, region));
        match lipschitz_ratio(f, &x, &y) {
            Ok(ratio) => {
                best = best.max(ratio);
                drawn += 1;
            }
            Err(Error::DegeneratePair) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_multilinear;
    use crate::geometry::{BoxKind, MultilinearForm};

    fn shape(r: usize, s: usize) -> IndexShape {
        IndexShape::new(r, s).unwrap()
    }

    fn pt(r: usize, s: usize, v: &[f64]) -> Point {
        Point::new(shape(r, s), v.to_vec()).unwrap()
    }

    fn expr(r: usize, s: usize, e: &str) -> ScalarField {
        ScalarField::from_expression(shape(r, s), e).unwrap()
    }

    #[test]
    fn one_dimensional_increment() {
        let f = expr(1, 1, "x^2");
        assert_eq!(increment(&f, &pt(1, 1, &[1.0]), &pt(1, 1, &[3.0])).unwrap(), 8.0);
    }

    #[test]
    fn unit_square_product() {
        // corners: f(1,1) - f(0,1) - f(1,0) + f(0,0) = 1
        let f = expr(2, 1, "x1*x2");
        assert_eq!(increment(&f, &pt(2, 1, &[0.0, 0.0]), &pt(2, 1, &[1.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn coinciding_points_vanish() {
        let f = expr(3, 1, "exp(x1) * sin(x2) + x3^3 * x1");
        let x = pt(3, 1, &[0.3, 0.4, 0.5]);
        assert_eq!(increment(&f, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let f = expr(2, 1, "x1");
        assert!(increment(&f, &pt(1, 2, &[0.0, 0.0]), &pt(2, 1, &[0.0, 0.0])).is_err());
    }

    #[test]
    fn inductive_examples() {
        let f = expr(2, 1, "x1*x2");
        let x = pt(2, 1, &[0.0, 0.0]);
        let y = pt(2, 1, &[1.0, 1.0]);
        assert_eq!(increment_inductive(&f, &x, &y, 1).unwrap(), 1.0);
        let c = ScalarField::constant(shape(2, 1), 4.0);
        assert_eq!(increment_inductive(&c, &x, &y, 0).unwrap(), 0.0);
    }

    #[test]
    fn inductive_errors() {
        let f = expr(1, 1, "x");
        let x = pt(1, 1, &[0.0]);
        assert!(increment_inductive(&f, &x, &x, 0).is_err());
        let f = expr(2, 1, "x1");
        let x = pt(2, 1, &[0.0, 0.0]);
        assert!(matches!(
            increment_inductive(&f, &x, &x, 2),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn ratio_examples() {
        let lam = MultilinearForm::new(shape(3, 1), vec![-2.5]).unwrap();
        let f = make_multilinear(&lam);
        let r = lipschitz_ratio(&f, &pt(3, 1, &[0.1, 0.9, 0.3]), &pt(3, 1, &[0.7, 0.2, 0.35])).unwrap();
        assert!((r - 2.5).abs() < 1e-12);

        let c = ScalarField::constant(shape(1, 1), 1.0);
        assert_eq!(lipschitz_ratio(&c, &pt(1, 1, &[0.0]), &pt(1, 1, &[1.0])).unwrap(), 0.0);

        // x^2: ratio is |x + y|
        let f = expr(1, 1, "x^2");
        let r = lipschitz_ratio(&f, &pt(1, 1, &[0.2]), &pt(1, 1, &[0.7])).unwrap();
        assert!((r - 0.9).abs() < 1e-14);

        assert_eq!(
            lipschitz_ratio(&f, &pt(1, 1, &[0.2]), &pt(1, 1, &[0.2])),
            Err(Error::DegeneratePair)
        );
        let g = expr(2, 1, "x1*x2");
        assert_eq!(
            lipschitz_ratio(&g, &pt(2, 1, &[0.2, 0.1]), &pt(2, 1, &[0.2, 0.5])),
            Err(Error::DegeneratePair)
        );
    }

    #[test]
    fn lipschitz_estimates() {
        let lam = MultilinearForm::new(shape(2, 1), vec![3.0]).unwrap();
        let f = make_multilinear(&lam);
        let unit = AxisBox::unit(shape(2, 1));
        let c = estimate_ndim_lipschitz_constant(&f, &unit, 200, 1).unwrap();
        assert!((c - 3.0).abs() < 1e-12);

        let k = ScalarField::constant(shape(2, 1), 7.0);
        assert_eq!(estimate_ndim_lipschitz_constant(&k, &unit, 50, 2).unwrap(), 0.0);

        // x^2 on [0, 2]: sup |x + y| = 4, approached from below
        let f = expr(1, 1, "x^2");
        let b = AxisBox::new(pt(1, 1, &[0.0]), pt(1, 1, &[2.0]), BoxKind::Closed).unwrap();
        let few = estimate_ndim_lipschitz_constant(&f, &b, 10, 3).unwrap();
        let many = estimate_ndim_lipschitz_constant(&f, &b, 20_000, 3).unwrap();
        assert!(few <= 4.0 && many <= 4.0);
        assert!(many > 3.95);
        assert!(estimate_ndim_lipschitz_constant(&f, &b, 0, 3).is_err());
    }
}
