use crate::error::{Error, Result};
use crate::tensor::{gemm, Layout, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct DenseGrads<T: Scalar> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

fn check<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Result<[usize; 3]> {
    let [n, f] = x.dims2()?;
    let [wf, c] = w.dims2()?;
    if f != wf {
        return Err(Error::shape(format!(
            "dense layer expects {wf} input features, got {f}"
        )));
    }
    Ok([n, f, c])
}

/// `y = x·w + b`, with `x: N×F`, `w: F×C`, `b: C`.
pub fn dense<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, f, c] = check(x, w)?;
    if b.shape() != [c] {
        return Err(Error::shape(format!("dense bias must be [{c}], got {:?}", b.shape())));
    }
    let mut y = Tensor::alloc(&[n, c]);
    for row in y.data_mut().chunks_mut(c) {
        row.copy_from_slice(b.data());
    }
    gemm(n, f, c, x.data(), Layout::Normal, w.data(), Layout::Normal, y.data_mut(), true);
    Ok(y)
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let [n, f, c] = check(x, w)?;
    if dy.shape() != [n, c] {
        return Err(Error::shape(format!(
            "dense backward: gradient {:?} vs output [{n}, {c}]",
            dy.shape()
        )));
    }
    let mut dx = Tensor::alloc(&[n, f]);
    gemm(n, c, f, dy.data(), Layout::Normal, w.data(), Layout::Transposed, dx.data_mut(), false);
    let mut dw = Tensor::alloc(&[f, c]);
    gemm(f, n, c, x.data(), Layout::Transposed, dy.data(), Layout::Normal, dw.data_mut(), false);
    let mut db = Tensor::alloc(&[c]);
    for row in dy.data().chunks(c) {
        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    Ok(DenseGrads { dx, dw, db })
}
