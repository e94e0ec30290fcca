//! Per-channel batch normalization over `(N, H, W)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Learned affine parameters plus running statistics for eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNormState<T> {
    /// γ = 1, β = 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full(&[channels], T::one())?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::full(&[channels], T::one())?,
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values saved by the train-mode forward for the backward pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchNormCache<T: Scalar> {
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
    shape: [usize; 4],
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T: Scalar> {
    pub dx: Tensor<T>,
    pub dgamma: Tensor<T>,
    pub dbeta: Tensor<T>,
}

fn check_channels<T: Scalar>(x: &Tensor<T>, state: &BatchNormState<T>) -> Result<[usize; 4]> {
    let dims = x.dims4()?;
    if dims[1] != state.channels() {
        return Err(Error::shape(format!(
            "batch norm over {} channels got input {:?}",
            state.channels(),
            x.shape()
        )));
    }
    Ok(dims)
}

/// Normalizes with batch statistics (biased variance) and updates the running
/// statistics as `running ← (1−m)·running + m·batch` (unbiased variance).
pub fn batchnorm2d_train<T: Scalar>(
    x: &Tensor<T>,
    state: &mut BatchNormState<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let [n, c, h, w] = check_channels(x, state)?;
    let hw = h * w;
    let count = n * hw;
    if count < 2 {
        return Err(Error::shape(format!(
            "degenerate batch: batch norm needs at least 2 values per channel in train mode, got {count}"
        )));
    }
    let xd = x.data();
    let mut y = Tensor::alloc(x.shape());
    let mut x_hat = vec![T::zero(); xd.len()];
    let mut inv_std = vec![0.0; c];
    let m = state.momentum;
    for ch in 0..c {
        let planes = || (0..n).map(move |s| (s * c + ch) * hw);
        let mut sum = 0.0;
        for base in planes() {
            sum += xd[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / count as f64;
        let mut sq = 0.0;
        for base in planes() {
            sq += xd[base..base + hw]
                .iter()
                .map(|v| (v.as_f64() - mean).powi(2))
                .sum::<f64>();
        }
        let var = sq / count as f64;
        let istd = 1.0 / (var + state.eps).sqrt();
        inv_std[ch] = istd;
        let g = state.gamma.data()[ch].as_f64();
        let b = state.beta.data()[ch].as_f64();
        for base in planes() {
            for i in base..base + hw {
                let xh = (xd[i].as_f64() - mean) * istd;
                x_hat[i] = T::from_f64_lossy(xh);
                y.data_mut()[i] = T::from_f64_lossy(g * xh + b);
            }
        }
        let unbiased = sq / (count - 1) as f64;
        let rm = &mut state.running_mean.data_mut()[ch];
        *rm = T::from_f64_lossy((1.0 - m) * rm.as_f64() + m * mean);
        let rv = &mut state.running_var.data_mut()[ch];
        *rv = T::from_f64_lossy((1.0 - m) * rv.as_f64() + m * unbiased);
    }
    Ok((
        y,
        BatchNormCache {
            x_hat,
            inv_std,
            shape: [n, c, h, w],
        },
    ))
}

/// Normalizes with the running statistics only.
pub fn batchnorm2d_eval<T: Scalar>(x: &Tensor<T>, state: &BatchNormState<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = check_channels(x, state)?;
    let hw = h * w;
    let mut y = Tensor::alloc(x.shape());
    for ch in 0..c {
        let mean = state.running_mean.data()[ch].as_f64();
        let istd = 1.0 / (state.running_var.data()[ch].as_f64() + state.eps).sqrt();
        let scale = state.gamma.data()[ch].as_f64() * istd;
        let shift = state.beta.data()[ch].as_f64() - mean * scale;
        for s in 0..n {
            let base = (s * c + ch) * hw;
            for i in base..base + hw {
                y.data_mut()[i] = T::from_f64_lossy(x.data()[i].as_f64() * scale + shift);
            }
        }
    }
    Ok(y)
}

pub fn batchnorm2d_backward<T: Scalar>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    let [n, c, h, w] = cache.shape;
    if dy.shape() != cache.shape {
        return Err(Error::shape(format!(
            "batch norm backward: gradient {:?} vs cached {:?}",
            dy.shape(),
            cache.shape
        )));
    }
    let hw = h * w;
    let count = (n * hw) as f64;
    let dyd = dy.data();
    let mut dx = Tensor::alloc(dy.shape());
    let mut dgamma = Tensor::alloc(&[c]);
    let mut dbeta = Tensor::alloc(&[c]);
    for ch in 0..c {
        let planes = || (0..n).map(move |s| (s * c + ch) * hw);
        let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
        for base in planes() {
            for i in base..base + hw {
                let g = dyd[i].as_f64();
                sum_dy += g;
                sum_dy_xh += g * cache.x_hat[i].as_f64();
            }
        }
        dbeta.data_mut()[ch] = T::from_f64_lossy(sum_dy);
        dgamma.data_mut()[ch] = T::from_f64_lossy(sum_dy_xh);
        // dx = γ·σ⁻¹/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
        let k = gamma.data()[ch].as_f64() * cache.inv_std[ch] / count;
        for base in planes() {
            for i in base..base + hw {
                let v = count * dyd[i].as_f64() - sum_dy - cache.x_hat[i].as_f64() * sum_dy_xh;
                dx.data_mut()[i] = T::from_f64_lossy(k * v);
            }
        }
    }
    Ok(BatchNormGrads { dx, dgamma, dbeta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, project};
    use crate::rng::Rng;

    fn random(shape: &[usize], rng: &mut Rng, lo: f64, hi: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform_in(lo, hi)).collect()).unwrap()
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::<f64>::full(&[2, 3, 2, 2], 4.2).unwrap();
        let mut st = BatchNormState::new(3).unwrap();
        let (y, _) = batchnorm2d_train(&x, &mut st).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn output_has_zero_mean_unit_variance() {
        let mut rng = Rng::new(8);
        let x = random(&[4, 2, 3, 3], &mut rng, -3.0, 5.0);
        let mut st = BatchNormState::new(2).unwrap();
        let (y, _) = batchnorm2d_train(&x, &mut st).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|s| y.data()[(s * 2 + ch) * 9..][..9].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() <= 1e-6);
            assert!((var - 1.0).abs() <= 1e-5, "variance {var}");
        }
    }

    #[test]
    fn running_stats_update_and_eval_uses_them() {
        let x = Tensor::<f64>::new(&[2, 1, 1, 1], vec![1.0, 3.0]).unwrap();
        let mut st = BatchNormState::new(1).unwrap();
        batchnorm2d_train(&x, &mut st).unwrap();
        // mean 2, unbiased variance 2
        assert!((st.running_mean.data()[0] - 0.2).abs() < 1e-12);
        assert!((st.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-12);
        let y = batchnorm2d_eval(&x, &st).unwrap();
        let s = (1.1f64 + BN_EPS).sqrt();
        assert!((y.data()[0] - (1.0 - 0.2) / s).abs() < 1e-12);
        assert!(st.running_var.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_value_channel_is_degenerate() {
        let x = Tensor::<f64>::zeros(&[1, 2, 1, 1]).unwrap();
        let mut st = BatchNormState::new(2).unwrap();
        assert!(matches!(batchnorm2d_train(&x, &mut st), Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(100 + seed);
            let x = random(&[3, 2, 3, 2], &mut rng, -2.0, 2.0);
            let mut st = BatchNormState::new(2).unwrap();
            st.gamma = random(&[2], &mut rng, 0.5, 1.5);
            st.beta = random(&[2], &mut rng, -0.5, 0.5);
            let r = random(&[3, 2, 3, 2], &mut rng, -1.0, 1.0);
            let (_, cache) = batchnorm2d_train(&x, &mut st.clone()).unwrap();
            let g = batchnorm2d_backward(&cache, &st.gamma, &r).unwrap();
            let f = |xp: &Tensor<f64>, s: &BatchNormState<f64>| {
                Ok(project(&batchnorm2d_train(xp, &mut s.clone())?.0, &r))
            };
            let ex = grad_check(|xp| f(xp, &st), &x, &g.dx, 1e-5).unwrap();
            let eg = grad_check(
                |gp| {
                    let mut s = st.clone();
                    s.gamma = gp.clone();
                    f(&x, &s)
                },
                &st.gamma,
                &g.dgamma,
                1e-5,
            )
            .unwrap();
            let eb = grad_check(
                |bp| {
                    let mut s = st.clone();
                    s.beta = bp.clone();
                    f(&x, &s)
                },
                &st.beta,
                &g.dbeta,
                1e-5,
            )
            .unwrap();
            assert!(ex <= 1e-5, "dx rel err {ex}");
            assert!(eg <= 1e-5 && eb <= 1e-5, "dgamma {eg} dbeta {eb}");
        }
    }
}
