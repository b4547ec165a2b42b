use alloc::vec;

use super::{FcLayer, FcSpec};
use crate::error::{Error, Result};
use crate::faultsim::{ExecContext, OpKind, Variant};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `C[m] = sum_k A[k] * B[k][m] + bias[m]`. Any input with `K` elements is
/// accepted and read in row-major order; the output is `1 x M`.
pub fn fc<T: Scalar>(input: &Tensor<T>, layer: &FcLayer<T>, ctx: &ExecContext) -> Result<Tensor<T>> {
    fc_with(
        input,
        &layer.spec,
        layer.weights.data(),
        layer.bias.data(),
        ctx,
        OpKind::Main,
    )
}

pub fn fc_with<T: Scalar>(
    input: &Tensor<T>,
    spec: &FcSpec,
    weights: &[T],
    bias: &[T],
    ctx: &ExecContext,
    op: OpKind,
) -> Result<Tensor<T>> {
    let (k, m) = (spec.in_features, spec.out_features);
    if input.len() != k {
        return Err(Error::shape(&[1, k], input.shape()));
    }
    if weights.len() != k * m {
        return Err(Error::shape(&[k, m], &[weights.len()]));
    }
    if bias.len() != m {
        return Err(Error::shape(&[m], &[bias.len()]));
    }
    // Row-major sweep over B; each accumulator still sees k in ascending order.
    let mut acc = vec![T::ZERO; m];
    for (a, row) in input.data().iter().zip(weights.chunks_exact(m)) {
        for (c, &w) in acc.iter_mut().zip(row) {
            *c += *a * w;
        }
    }
    let out = acc
        .iter()
        .zip(bias)
        .enumerate()
        .map(|(j, (&c, &b))| ctx.maybe_inject(ctx.site(op, Variant::A, j as u64), c + b))
        .collect();
    Ok(Tensor::from_parts(vec![1, m], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use crate::tensor::{random_tensor, Dist};

    fn layer(w: &[f64], k: usize, m: usize, b: &[f64]) -> FcLayer {
        FcLayer::new(
            FcSpec::new(k, m).unwrap(),
            Tensor::new(&[k, m], w.to_vec()).unwrap(),
            Tensor::new(&[m], b.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_weights() {
        let l = layer(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.0, 0.0]);
        let a = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        let c = fc(&a, &l, &ExecContext::fault_free()).unwrap();
        assert_eq!(c.data(), &[1.0, 2.0]);
    }

    #[test]
    fn ones_with_bias() {
        let l = layer(&[1.0; 6], 3, 2, &[10.0, 20.0]);
        let a = Tensor::new(&[1, 3], vec![1.0; 3]).unwrap();
        let c = fc(&a, &l, &ExecContext::fault_free()).unwrap();
        assert_eq!(c.data(), &[13.0, 23.0]);
    }

    #[test]
    fn matches_naive_oracle() {
        let (k, m) = (64, 16);
        let a: Tensor = random_tensor(&[1, k], Seed(8), Dist::Uniform).unwrap();
        let w: Tensor = random_tensor(&[k, m], Seed(9), Dist::Uniform).unwrap();
        let b: Tensor = random_tensor(&[m], Seed(10), Dist::Uniform).unwrap();
        let mut expect = [0.0f64; 16];
        for (j, e) in expect.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..k {
                s += a.data()[i] * w.data()[i * m + j];
            }
            *e = s + b.data()[j];
        }
        let l = FcLayer::new(FcSpec::new(k, m).unwrap(), w, b).unwrap();
        let c = fc(&a, &l, &ExecContext::fault_free()).unwrap();
        assert_eq!(c.data(), &expect);
    }

    #[test]
    fn flattens_any_input_shape() {
        let l = layer(&[1.0; 8], 4, 2, &[0.0, 0.0]);
        let a = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = fc(&a, &l, &ExecContext::fault_free()).unwrap();
        assert_eq!(c.shape(), &[1, 2]);
        assert_eq!(c.data(), &[10.0, 10.0]);
    }

    #[test]
    fn length_mismatch() {
        let l = layer(&[1.0; 6], 3, 2, &[0.0, 0.0]);
        let a = Tensor::new(&[1, 2], vec![1.0; 2]).unwrap();
        assert!(fc(&a, &l, &ExecContext::fault_free()).is_err());
    }
}
