use alloc::vec;

use super::{ConvLayer, ConvSpec};
use crate::error::{Error, Result};
use crate::faultsim::{ExecContext, OpKind, Variant};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Direct convolution `O[m][x][y] = sum_{k,i,j} D[k][Ux+i][Uy+j] * W[m][k][i][j] + B[m]`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>, ctx: &ExecContext) -> Result<Tensor<T>> {
    conv2d_with(
        input,
        &layer.spec,
        layer.weights.data(),
        layer.bias.data(),
        ctx,
        OpKind::Main,
    )
}

/// Convolution over raw weight/bias slices, tagging fault sites with `op`.
///
/// `weights` is `M x Ch x R x R` row-major and `bias` has length `M`.
pub fn conv2d_with<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &[T],
    bias: &[T],
    ctx: &ExecContext,
    op: OpKind,
) -> Result<Tensor<T>> {
    spec.validate()?;
    if input.shape() != spec.input_shape() {
        return Err(Error::shape(&spec.input_shape(), input.shape()));
    }
    let m = spec.out_channels;
    if weights.len() != m * spec.fan_in() {
        return Err(Error::shape(&spec.weight_shape(), &[weights.len()]));
    }
    if bias.len() != m {
        return Err(Error::shape(&[m], &[bias.len()]));
    }

    let e = spec.output_size();
    let plane = e * e;
    let mut out = vec![T::ZERO; m * plane];
    let d = input.data();

    let channel = |oc: usize, dst: &mut [T]| {
        let (ch, r, u, h) = (spec.in_channels, spec.kernel, spec.stride, spec.input_size);
        let w = &weights[oc * ch * r * r..(oc + 1) * ch * r * r];
        // One accumulator per output column; each still sums k, i, j in order.
        let mut acc = vec![T::ZERO; e];
        for x in 0..e {
            acc.fill(T::ZERO);
            for k in 0..ch {
                for i in 0..r {
                    let row = &d[(k * h + u * x + i) * h..][..h];
                    let wrow = &w[(k * r + i) * r..][..r];
                    for (j, &wv) in wrow.iter().enumerate() {
                        if u == 1 {
                            for (a, &dv) in acc.iter_mut().zip(&row[j..j + e]) {
                                *a += dv * wv;
                            }
                        } else {
                            for (y, a) in acc.iter_mut().enumerate() {
                                *a += row[u * y + j] * wv;
                            }
                        }
                    }
                }
            }
            for (y, &a) in acc.iter().enumerate() {
                let idx = x * e + y;
                dst[idx] = ctx.maybe_inject(ctx.site(op, Variant::A, (oc * plane + idx) as u64), a + bias[oc]);
            }
        }
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(plane)
            .enumerate()
            .for_each(|(oc, dst)| channel(oc, dst));
    }
    #[cfg(not(feature = "parallel"))]
    for (oc, dst) in out.chunks_mut(plane).enumerate() {
        channel(oc, dst);
    }

    Ok(Tensor::from_parts(vec![m, e, e], out))
}
