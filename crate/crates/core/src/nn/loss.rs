use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax − onehot) / N` with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let [n, c] = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for a batch of {n} logits",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::data(format!("label {bad} outside [0, {c})")));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * c);
    for (row, &label) in logits.data().chunks(c).zip(labels) {
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() - (row[label].as_f64() - max);
        for (k, e) in exps.iter().enumerate() {
            let onehot = if k == label { 1.0 } else { 0.0 };
            grad.push(T::from_f64_lossy((e / z - onehot) / n as f64));
        }
    }
    Ok((loss / n as f64, Tensor::from_parts(&[n, c], grad)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Tensor::<f64>::zeros(&[3, 11]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 5, 10]).unwrap();
        assert!((loss - 11f64.ln()).abs() < 1e-12);
        assert!((loss - 2.397_895).abs() < 1e-6);
    }

    #[test]
    fn huge_logit_is_stable() {
        let mut logits = Tensor::<f32>::zeros(&[1, 11]).unwrap();
        logits.data_mut()[4] = 1000.0;
        let (loss, grad) = softmax_cross_entropy(&logits, &[4]).unwrap();
        assert!(loss.abs() < 1e-6);
        assert!(grad.is_finite());
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits = Tensor::<f64>::new(&[2, 11], (0..22).map(|i| (i as f64 * 0.37).sin() * 3.0).collect()).unwrap();
        let (_, grad) = softmax_cross_entropy(&logits, &[3, 9]).unwrap();
        for row in grad.data().chunks(11) {
            assert!(row.iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn label_out_of_range_is_data_error() {
        let logits = Tensor::<f64>::zeros(&[1, 11]).unwrap();
        assert!(matches!(softmax_cross_entropy(&logits, &[11]), Err(Error::Data(_))));
    }
}
