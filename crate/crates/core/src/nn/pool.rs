use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Flat input index of the maximum chosen for every output element.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    input_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// 2×2 max pooling, stride 2. Odd trailing rows/columns are dropped. Ties go
/// to the first element in row-major window order.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolCache)> {
    let [n, c, h, w] = x.dims4()?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "max pooling needs at least 2×2 spatial input, got {h}×{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut y = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * w + 2 * j;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                y.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_parts(&[n, c, oh, ow], y),
        MaxPoolCache {
            input_shape: [n, c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2d_backward<T: Scalar>(cache: &MaxPoolCache, dy: &Tensor<T>) -> Result<Tensor<T>> {
    if dy.len() != cache.argmax.len() {
        return Err(Error::shape(format!(
            "max pool backward: gradient {:?} does not match cached output",
            dy.shape()
        )));
    }
    let mut dx = Tensor::alloc(&cache.input_shape);
    let dxd = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        dxd[idx] = dxd[idx] + g;
    }
    Ok(dx)
}

/// Input range `[start, end)` averaged into output index `i` when `len`
/// inputs are pooled to `out` outputs.
pub fn adaptive_window(i: usize, len: usize, out: usize) -> (usize, usize) {
    let start = i * len / out;
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

pub fn adaptive_avgpool2d<T: Scalar>(x: &Tensor<T>, out: (usize, usize)) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let (oh, ow) = out;
    if oh == 0 || ow == 0 {
        return Err(Error::shape("adaptive pool output size must be at least 1×1"));
    }
    let xd = x.data();
    let mut y = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            let (r0, r1) = adaptive_window(i, h, oh);
            for j in 0..ow {
                let (c0, c1) = adaptive_window(j, w, ow);
                let mut acc = T::zero();
                for r in r0..r1 {
                    for col in c0..c1 {
                        acc = acc + xd[base + r * w + col];
                    }
                }
                let size = T::from_usize((r1 - r0) * (c1 - c0)).expect("window size");
                y.push(acc / size);
            }
        }
    }
    Ok(Tensor::from_parts(&[n, c, oh, ow], y))
}

pub fn adaptive_avgpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    out: (usize, usize),
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, c, h, w]: [usize; 4] = input_shape
        .try_into()
        .map_err(|_| Error::shape("adaptive pool backward needs a 4-d input shape"))?;
    let (oh, ow) = out;
    if dy.shape() != [n, c, oh, ow] {
        return Err(Error::shape(format!(
            "adaptive pool backward: gradient {:?} vs expected [{n}, {c}, {oh}, {ow}]",
            dy.shape()
        )));
    }
    let mut dx = Tensor::alloc(input_shape);
    let dyd = dy.data();
    let dxd = dx.data_mut();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            let (r0, r1) = adaptive_window(i, h, oh);
            for j in 0..ow {
                let (c0, c1) = adaptive_window(j, w, ow);
                let size = T::from_usize((r1 - r0) * (c1 - c0)).expect("window size");
                let g = dyd[(plane * oh + i) * ow + j] / size;
                for r in r0..r1 {
                    for col in c0..c1 {
                        dxd[base + r * w + col] = dxd[base + r * w + col] + g;
                    }
                }
            }
        }
    }
    Ok(dx)
}
