use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Subgradient at exactly zero is taken as 0.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() {
        return Err(Error::shape(format!(
            "relu backward: input {:?} vs gradient {:?}",
            x.shape(),
            dy.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor::from_parts(x.shape(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::<f64>::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn positive_region_is_identity() {
        let x = Tensor::<f64>::new(&[3], vec![0.5, 1.0, 2.0]).unwrap();
        let dy = Tensor::new(&[3], vec![3.0, -4.0, 5.0]).unwrap();
        assert_eq!(relu(&x), x);
        assert_eq!(relu_backward(&x, &dy).unwrap(), dy);
    }

    #[test]
    fn zero_has_zero_gradient() {
        let x = Tensor::<f64>::new(&[1], vec![0.0]).unwrap();
        let dy = Tensor::new(&[1], vec![1.0]).unwrap();
        assert_eq!(relu_backward(&x, &dy).unwrap().data(), &[0.0]);
    }
}
