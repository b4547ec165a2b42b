//! Two independent implementations of every nonlinear layer.
//!
//! Variant A walks elements front to back and uses branches; variant B walks
//! back to front, selects by bit masks, and multiplies by a reciprocal where A
//! divides. Both produce the same values up to rounding. Softmax sums are
//! compensated so the two summation orders agree to about one ulp.

use alloc::vec;
use alloc::vec::Vec;

use super::{NonlinearKind, PoolSpec};
use crate::error::Result;
use crate::faultsim::{ExecContext, OpKind, Variant};
use crate::scalar::Scalar;
use crate::sum::{compensated_sum, CompensatedSum};
use crate::tensor::Tensor;

pub fn nonlinear<T: Scalar>(
    x: &Tensor<T>,
    kind: NonlinearKind,
    variant: Variant,
    ctx: &ExecContext,
) -> Result<Tensor<T>> {
    let out_shape = kind.output_shape(x.shape())?;
    let mut out = match (kind, variant) {
        (NonlinearKind::Relu, Variant::A) => relu_a(x.data()),
        (NonlinearKind::Relu, Variant::B) => relu_b(x.data()),
        (NonlinearKind::MaxPool(p), Variant::A) => maxpool_a(x, p, out_shape[1]),
        (NonlinearKind::MaxPool(p), Variant::B) => maxpool_b(x, p, out_shape[1]),
        (NonlinearKind::Softmax, Variant::A) => softmax_a(x.data()),
        (NonlinearKind::Softmax, Variant::B) => softmax_b(x.data()),
    };
    if !ctx.is_quiet() {
        for (i, v) in out.iter_mut().enumerate() {
            *v = ctx.maybe_inject(ctx.site(OpKind::Nonlinear, variant, i as u64), *v);
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Branch-free pick of `a` when `cond`, else `b`.
#[inline]
fn select<T: Scalar>(cond: bool, a: T, b: T) -> T {
    let mask = (cond as u64).wrapping_neg();
    T::from_bits_u64((a.to_bits_u64() & mask) | (b.to_bits_u64() & !mask))
}

fn relu_a<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|&v| if v > T::ZERO { v } else { T::ZERO })
        .collect()
}

fn relu_b<T: Scalar>(x: &[T]) -> Vec<T> {
    let half = T::from_f64(0.5);
    let mut out = vec![T::ZERO; x.len()];
    for i in (0..x.len()).rev() {
        let v = x[i];
        // v + |v| is exactly 2v or 0
        out[i] = (v + v.abs()) * half;
    }
    out
}

fn maxpool_a<T: Scalar>(x: &Tensor<T>, p: PoolSpec, e: usize) -> Vec<T> {
    let (c, h) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    let mut out = Vec::with_capacity(c * e * e);
    for ch in 0..c {
        for ox in 0..e {
            for oy in 0..e {
                let base = ch * h * h + ox * p.stride * h + oy * p.stride;
                let mut m = d[base];
                for i in 0..p.window {
                    for j in 0..p.window {
                        let v = d[base + i * h + j];
                        if v > m {
                            m = v;
                        }
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

fn maxpool_b<T: Scalar>(x: &Tensor<T>, p: PoolSpec, e: usize) -> Vec<T> {
    let (c, h) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    let mut out = vec![T::ZERO; c * e * e];
    for o in (0..out.len()).rev() {
        let (ch, rest) = (o / (e * e), o % (e * e));
        let (ox, oy) = (rest / e, rest % e);
        let base = ch * h * h + ox * p.stride * h + oy * p.stride;
        let mut m = d[base + (p.window - 1) * h + p.window - 1];
        for i in (0..p.window).rev() {
            for j in (0..p.window).rev() {
                let v = d[base + i * h + j];
                m = select(v > m, v, m);
            }
        }
        out[o] = m;
    }
    out
}

fn softmax_a<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut mx = x[0];
    for &v in x {
        if v > mx {
            mx = v;
        }
    }
    let e: Vec<T> = x.iter().map(|&v| (v - mx).exp()).collect();
    let s = compensated_sum(&e);
    e.into_iter().map(|v| v / s).collect()
}

fn softmax_b<T: Scalar>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let mut mx = x[n - 1];
    for i in (0..n).rev() {
        mx = select(x[i] > mx, x[i], mx);
    }
    let mut e = vec![T::ZERO; n];
    let mut s = CompensatedSum::new();
    for i in (0..n).rev() {
        e[i] = (x[i] - mx).exp();
        s.add(e[i]);
    }
    let inv = T::ONE / s.value();
    // multiply by the reciprocal rather than divide, unlike variant A
    e.into_iter().map(|v| v * inv).collect()
}
