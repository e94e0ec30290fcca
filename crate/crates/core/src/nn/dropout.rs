use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Per-element multipliers applied in the forward pass: 0 or `1/(1-p)`.
#[derive(Debug, Clone)]
pub struct DropoutMask<T: Scalar> {
    scale: Vec<T>,
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Eval mode is the exact identity and returns no mask.
pub fn dropout<T: Scalar>(
    x: &Tensor<T>,
    p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    check_probability(p)?;
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    let scale: Vec<T> = (0..x.len())
        .map(|_| if rng.bernoulli(p) { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&scale).map(|(&v, &s)| v * s).collect();
    Ok((Tensor::from_parts(x.shape(), data), Some(DropoutMask { scale })))
}

pub fn dropout_backward<T: Scalar>(
    mask: Option<&DropoutMask<T>>,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let Some(mask) = mask else {
        return Ok(dy.clone());
    };
    if mask.scale.len() != dy.len() {
        return Err(Error::shape("dropout backward: mask does not match gradient"));
    }
    let data = dy.data().iter().zip(&mask.scale).map(|(&g, &s)| g * s).collect();
    Ok(Tensor::from_parts(dy.shape(), data))
}
