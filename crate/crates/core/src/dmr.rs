//! Dual modular redundancy for nonlinear layers.
//!
//! Both variants of the layer run under the same fault context; their outputs
//! are compared element by element with a relative tolerance of a few ulps.
//! Disagreement is reported, never voted away.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faultsim::{ExecContext, Variant};
use crate::layers::{nonlinear, LayerKind, NonlinearKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmrConfig {
    /// Allowed relative difference, in units of machine epsilon.
    pub tolerance_ulps: f64,
}

impl Default for DmrConfig {
    fn default() -> Self {
        DmrConfig { tolerance_ulps: 8.0 }
    }
}

impl DmrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance_ulps >= 0.0 && self.tolerance_ulps.is_finite()) {
            return Err(Error::config("DMR tolerance must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn tolerance<T: Scalar>(&self) -> f64 {
        self.tolerance_ulps * T::EPSILON.to_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmrVerdict {
    pub layer: u32,
    pub kind: LayerKind,
    pub pass: bool,
    /// Largest relative difference `|a - b| / max(|a|, |b|)`.
    pub discrepancy: f64,
    pub tolerance: f64,
    /// Largest output magnitude across both variants.
    pub scale: f64,
    /// Whether both variant outputs were handed back to the caller.
    pub retained: bool,
}

/// Relative difference of one element pair; infinite when either is NaN.
/// Below the normal range the difference is taken relative to the smallest
/// normal value, since subnormal results carry fewer significant bits.
pub fn relative_difference<T: Scalar>(a: T, b: T) -> f64 {
    if a.to_bits_u64() == b.to_bits_u64() {
        return 0.0;
    }
    let (a, b) = (a.to_f64(), b.to_f64());
    if a.is_nan() || b.is_nan() {
        return f64::INFINITY;
    }
    let m = a.abs().max(b.abs());
    if m == 0.0 {
        // +0 and -0
        return 0.0;
    }
    let d = (a - b).abs() / m.max(T::MIN_POSITIVE.to_f64());
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

/// Compares two variant outputs.
pub fn compare<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, cfg: &DmrConfig) -> Result<(bool, f64, f64)> {
    if a.shape() != b.shape() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = relative_difference(x, y);
        if !(d <= worst) {
            worst = d;
        }
        scale = scale.max(x.to_f64().abs()).max(y.to_f64().abs());
    }
    let tol = cfg.tolerance::<T>();
    Ok((worst <= tol, worst, scale))
}

/// Runs both variants and returns variant A's output with the verdict.
pub fn dmr_execute<T: Scalar>(
    x: &Tensor<T>,
    kind: NonlinearKind,
    cfg: &DmrConfig,
    ctx: &ExecContext,
) -> Result<(Tensor<T>, DmrVerdict)> {
    let (a, _, v) = dmr_execute_retaining(x, kind, cfg, ctx)?;
    Ok((a, DmrVerdict { retained: false, ..v }))
}

/// Like [`dmr_execute`] but also returns variant B's output.
pub fn dmr_execute_retaining<T: Scalar>(
    x: &Tensor<T>,
    kind: NonlinearKind,
    cfg: &DmrConfig,
    ctx: &ExecContext,
) -> Result<(Tensor<T>, Tensor<T>, DmrVerdict)> {
    let a = nonlinear(x, kind, Variant::A, ctx)?;
    let b = nonlinear(x, kind, Variant::B, ctx)?;
    let (pass, discrepancy, scale) = compare(&a, &b, cfg)?;
    let verdict = DmrVerdict {
        layer: ctx.layer(),
        kind: kind.kind(),
        pass,
        discrepancy,
        tolerance: cfg.tolerance::<T>(),
        scale,
        retained: true,
    };
    Ok((a, b, verdict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::faultsim::{Correlation, ForcedFault};
    use crate::layers::PoolSpec;
    use crate::rng::Seed;
    use crate::tensor::{random_tensor, Dist};

    #[test]
    fn relu_agrees() {
        let x = Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (out, v) = dmr_execute(&x, NonlinearKind::Relu, &DmrConfig::default(), &ExecContext::fault_free()).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
        assert!(v.pass);
        assert_eq!(v.discrepancy, 0.0);
        assert!(!v.retained);
    }

    #[test]
    fn all_kinds_agree_fault_free() {
        let cfg = DmrConfig::default();
        let ctx = ExecContext::fault_free();
        for s in 0..50 {
            let x: Tensor = random_tensor(&[4, 6, 6], Seed(s), Dist::Normal).unwrap();
            let pool = NonlinearKind::MaxPool(PoolSpec { window: 2, stride: 2 });
            for kind in [NonlinearKind::Relu, pool, NonlinearKind::Softmax] {
                let (_, v) = dmr_execute(&x, kind, &cfg, &ctx).unwrap();
                assert!(v.pass, "{kind:?} seed {s}: {}", v.discrepancy);
            }
            let y: Tensor<f32> = random_tensor(&[1, 10], Seed(s), Dist::Normal).unwrap();
            let (_, v) = dmr_execute(&y, NonlinearKind::Softmax, &cfg, &ctx).unwrap();
            assert!(v.pass);
        }
    }

    #[test]
    fn fault_in_one_variant_detected() {
        let x: Tensor = random_tensor(&[16], Seed(2), Dist::Normal).unwrap();
        for (variant, bit) in [(Variant::A, 20), (Variant::B, 51)] {
            let forced = [ForcedFault::nonlinear(0, variant, 5, bit)];
            let ctx = ExecContext::fault_free().with_forced(&forced);
            let (_, _, v) = dmr_execute_retaining(&x, NonlinearKind::Softmax, &DmrConfig::default(), &ctx).unwrap();
            assert!(!v.pass);
            assert!(v.retained);
        }
    }

    #[test]
    fn flip_of_relu_zero_detected() {
        // a flipped zero becomes a subnormal; relative comparison still sees it
        let x = Tensor::new(&[2], vec![-3.0, 1.0]).unwrap();
        let forced = [ForcedFault::nonlinear(0, Variant::B, 0, 30)];
        let ctx = ExecContext::fault_free().with_forced(&forced);
        let (_, v) = dmr_execute(&x, NonlinearKind::Relu, &DmrConfig::default(), &ctx).unwrap();
        assert!(!v.pass);
    }

    #[test]
    fn correlated_fault_is_invisible() {
        let x: Tensor = random_tensor(&[16], Seed(3), Dist::Normal).unwrap();
        let forced = [ForcedFault::nonlinear(0, Variant::A, 5, 45)];
        let ctx = ExecContext::fault_free()
            .with_forced(&forced)
            .with_correlation(Correlation::Correlated);
        let (out, v) = dmr_execute(&x, NonlinearKind::Relu, &DmrConfig::default(), &ctx).unwrap();
        assert!(v.pass);
        assert_ne!(out.data()[5].to_bits(), x.data()[5].max(0.0).to_bits());
    }

    #[test]
    fn nan_is_a_mismatch() {
        assert_eq!(relative_difference(f64::NAN, 1.0), f64::INFINITY);
        assert_eq!(relative_difference(0.0, -0.0), 0.0);
        assert_eq!(relative_difference(f64::INFINITY, f64::INFINITY), 0.0);
        assert_eq!(relative_difference(f64::INFINITY, -f64::INFINITY), f64::INFINITY);
        // two subnormals one unit apart differ by one unit of the smallest normal
        let tiny = f64::from_bits(3);
        let next = f64::from_bits(4);
        assert_eq!(relative_difference(tiny, next), f64::from_bits(1) / f64::MIN_POSITIVE);
        assert_eq!(relative_difference(0.0f32, f32::from_bits(1)), f64::from(f32::EPSILON));
    }
}
