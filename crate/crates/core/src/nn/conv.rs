//! 3×3 convolution, stride 1, zero "same" padding, lowered to GEMM via im2col.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Layout, Scalar, Tensor};

pub const KERNEL: usize = 3;
const PAD: usize = KERNEL / 2;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T: Scalar> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

fn check(x: &Tensor<impl Scalar>, w: &Tensor<impl Scalar>) -> Result<([usize; 4], usize)> {
    let [n, cin, h, wd] = x.dims4()?;
    let [cout, wcin, kh, kw] = w.dims4()?;
    if kh != KERNEL || kw != KERNEL {
        return Err(Error::shape(format!(
            "conv2d kernel must be {KERNEL}×{KERNEL}, got {kh}×{kw}"
        )));
    }
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input has {cin}, kernel expects {wcin}"
        )));
    }
    Ok(([n, cin, h, wd], cout))
}

/// Unrolls one sample `[C, H, W]` into `[C·9, H·W]` patch columns.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for u in 0..KERNEL {
            for v in 0..KERNEL {
                let row = &mut cols[(ch * TAPS + u * KERNEL + v) * hw..][..hw];
                for i in 0..h {
                    let si = i + u;
                    let out = &mut row[i * w..(i + 1) * w];
                    if si < PAD || si - PAD >= h {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(si - PAD) * w..(si - PAD + 1) * w];
                    for (j, o) in out.iter_mut().enumerate() {
                        let sj = j + v;
                        *o = if sj < PAD || sj - PAD >= w {
                            T::zero()
                        } else {
                            src[sj - PAD]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds patch columns back onto one sample `[C, H, W]`.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, x: &mut [T]) {
    let hw = h * w;
    x.fill(T::zero());
    for ch in 0..c {
        let plane = &mut x[ch * hw..(ch + 1) * hw];
        for u in 0..KERNEL {
            for v in 0..KERNEL {
                let row = &cols[(ch * TAPS + u * KERNEL + v) * hw..][..hw];
                for i in 0..h {
                    let si = i + u;
                    if si < PAD || si - PAD >= h {
                        continue;
                    }
                    let dst = &mut plane[(si - PAD) * w..(si - PAD + 1) * w];
                    for j in 0..w {
                        let sj = j + v;
                        if sj >= PAD && sj - PAD < w {
                            dst[sj - PAD] = dst[sj - PAD] + row[i * w + j];
                        }
                    }
                }
            }
        }
    }
}

/// `y[n,o,i,j] = b[o] + Σ x_pad[n,c,i+u,j+v]·w[o,c,u,v]`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let ([n, cin, h, wd], cout) = check(x, w)?;
    if b.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv2d bias must be [{cout}], got {:?}",
            b.shape()
        )));
    }
    let hw = h * wd;
    let k = cin * TAPS;
    let mut y = Tensor::alloc(&[n, cout, h, wd]);
    y.data_mut()
        .par_chunks_mut(cout * hw)
        .zip(x.data().par_chunks(cin * hw))
        .for_each_init(
            || vec![T::zero(); k * hw],
            |cols, (ys, xs)| {
                im2col(xs, cin, h, wd, cols);
                for (o, row) in ys.chunks_mut(hw).enumerate() {
                    row.fill(b.data()[o]);
                }
                gemm(cout, k, hw, w.data(), Layout::Normal, cols, Layout::Normal, ys, true);
            },
        );
    Ok(y)
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<Conv2dGrads<T>> {
    let ([n, cin, h, wd], cout) = check(x, w)?;
    if dy.shape() != [n, cout, h, wd] {
        return Err(Error::shape(format!(
            "conv2d backward: gradient {:?} does not match output [{n}, {cout}, {h}, {wd}]",
            dy.shape()
        )));
    }
    let hw = h * wd;
    let k = cin * TAPS;
    let mut dx = Tensor::alloc(x.shape());
    // Per-sample weight gradients are reduced afterwards in sample order so
    // the result does not depend on how samples were scheduled.
    let partials: Vec<(Vec<T>, Vec<T>)> = dx
        .data_mut()
        .par_chunks_mut(cin * hw)
        .zip(x.data().par_chunks(cin * hw))
        .zip(dy.data().par_chunks(cout * hw))
        .map_init(
            || (vec![T::zero(); k * hw], vec![T::zero(); k * hw]),
            |(cols, dcols), ((dxs, xs), dys)| {
                im2col(xs, cin, h, wd, cols);
                let mut dw = vec![T::zero(); cout * k];
                gemm(cout, hw, k, dys, Layout::Normal, cols, Layout::Transposed, &mut dw, false);
                let db: Vec<T> = dys.chunks(hw).map(|r| r.iter().copied().sum()).collect();
                gemm(k, cout, hw, w.data(), Layout::Transposed, dys, Layout::Normal, dcols, false);
                col2im(dcols, cin, h, wd, dxs);
                (dw, db)
            },
        )
        .collect();

    let mut dw = Tensor::zeros_like(w);
    let mut db = Tensor::alloc(&[cout]);
    for (pw, pb) in &partials {
        for (acc, &v) in dw.data_mut().iter_mut().zip(pw) {
            *acc = *acc + v;
        }
        for (acc, &v) in db.data_mut().iter_mut().zip(pb) {
            *acc = *acc + v;
        }
    }
    Ok(Conv2dGrads { dx, dw, db })
}
