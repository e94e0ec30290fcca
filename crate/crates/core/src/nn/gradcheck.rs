//! Central finite-difference oracle for analytic gradients (f64 only).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Magnitude below which gradient components are compared absolutely.
/// Keeps round-off on near-zero components from reading as large relative
/// error.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, MAGNITUDE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Scalarizes a layer output with a fixed projection: `Σ y·r`.
/// The analytic gradient of this scalar with respect to `y` is `r`.
pub fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    assert_eq!(y.shape(), r.shape(), "projection shape mismatch");
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Compares `analytic` against `(f(x+h) − f(x−h)) / 2h` for every element of
/// `x` and returns the worst relative error.
pub fn grad_check<F>(mut f: F, x: &Tensor<f64>, analytic: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if x.shape() != analytic.shape() {
        return Err(Error::shape(format!(
            "gradient shape {:?} does not match input {:?}",
            analytic.shape(),
            x.shape()
        )));
    }
    if !x.is_finite() || !analytic.is_finite() {
        return Err(Error::Numeric("non-finite input or analytic gradient".into()));
    }
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective while perturbing element {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_of_quadratic() {
        let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let g = x.map(|v| 2.0 * v);
        let err = grad_check(|p| Ok(p.data().iter().map(|v| v * v).sum()), &x, &g, 1e-5).unwrap();
        assert!(err < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = Tensor::new(&[2], vec![1.0, 2.0]).unwrap();
        let g = Tensor::new(&[2], vec![2.0, 5.0]).unwrap();
        let err = grad_check(|p| Ok(p.data().iter().map(|v| v * v).sum()), &x, &g, 1e-5).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn non_finite_objective_is_numeric_error() {
        let x = Tensor::new(&[1], vec![1.0]).unwrap();
        let g = Tensor::new(&[1], vec![1.0]).unwrap();
        let r = grad_check(|_| Ok(f64::NAN), &x, &g, 1e-5);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
