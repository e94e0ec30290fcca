//! Parameter initialization.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Uniform on `[-b, b]` with `b = sqrt(6 / fan_in)` (He/Kaiming, ReLU gain).
pub fn kaiming_uniform_init<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    uniform_init(shape, kaiming_bound(fan_in)?, rng)
}

/// Scale applied to the Kaiming bound of the classifier layer so that the
/// untrained network starts close to uniform class probabilities.
pub const HEAD_GAIN: f64 = 0.01;

pub fn kaiming_bound(fan_in: usize) -> Result<f64> {
    if fan_in == 0 {
        return Err(Error::config("fan_in must be at least 1"));
    }
    Ok((6.0 / fan_in as f64).sqrt())
}

/// Uniform on `[-bound, bound]`.
pub fn uniform_init<T: Scalar>(shape: &[usize], bound: f64, rng: &mut Rng) -> Result<Tensor<T>> {
    let mut t = Tensor::zeros(shape)?;
    for v in t.data_mut() {
        *v = T::from_f64_lossy(rng.uniform_in(-bound, bound));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_in_six_has_unit_bound() {
        assert_eq!(kaiming_bound(6).unwrap(), 1.0);
        let t: Tensor<f64> = kaiming_uniform_init(&[1000], 6, &mut Rng::new(1)).unwrap();
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn deterministic_under_seed() {
        let a: Tensor<f32> = kaiming_uniform_init(&[4, 3, 3, 3], 27, &mut Rng::new(9)).unwrap();
        let b: Tensor<f32> = kaiming_uniform_init(&[4, 3, 3, 3], 27, &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_mean_within_three_sigma() {
        let n = 100_000;
        let t: Tensor<f64> = kaiming_uniform_init(&[n], 50, &mut Rng::new(2024)).unwrap();
        let b = (6.0f64 / 50.0).sqrt();
        let mean = t.sum() / n as f64;
        let sigma = b / (3.0 * n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sigma, "mean {mean} vs 3σ {}", 3.0 * sigma);
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(kaiming_uniform_init::<f32>(&[2], 0, &mut Rng::new(0)).is_err());
    }
}
