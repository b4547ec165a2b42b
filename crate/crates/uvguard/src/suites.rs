//! Property suites run by `verify`. Each case is keyed by `(seed, index)`, so
//! counts do not depend on the executor.

use std::fmt;
use std::time::{Duration, Instant};

use anyhow::Result;
use uvguard_core::abft::{
    conv_checked, fc_checked, precompute_weight_checksums, single_layer_checksums, verify as verify_checksums,
};
use uvguard_core::dmr::dmr_execute;
use uvguard_core::exec::Executor;
use uvguard_core::faultsim::{BitRange, ForcedFault, OpKind, Variant};
use uvguard_core::guard::{checked_forward, CheckConfig};
use uvguard_core::layers::{conv2d_with, ConvLayer, ConvSpec, FcLayer, FcSpec, LayerDesc, NonlinearKind, PoolSpec};
use uvguard_core::rng::{hash2, unit_f64};
use uvguard_core::tensor::{random_tensor, Dist};
use uvguard_core::{AbftConfig, DmrConfig, ExecContext, ModelGraph, Scalar, Seed, Tensor, ToleranceMode};

use crate::testset::TestSet;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    pub elapsed: Duration,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }

    pub fn failed(&self) -> usize {
        self.total - self.passed
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<12} {}  {}/{} passed, {} failed ({:.1}s)",
            self.name,
            if self.ok() { "PASS" } else { "FAIL" },
            self.passed,
            self.total,
            self.failed(),
            self.elapsed.as_secs_f64()
        )
    }
}

fn run_suite<E: Executor>(
    name: &'static str,
    n: usize,
    exec: &E,
    case: impl Fn(usize) -> Result<bool> + Sync + Send,
) -> Result<SuiteResult> {
    let t0 = Instant::now();
    let outcomes: Result<Vec<bool>> = exec.map(n, case).into_iter().collect();
    let passed = outcomes?.iter().filter(|&&ok| ok).count();
    Ok(SuiteResult {
        name,
        passed,
        total: n,
        elapsed: t0.elapsed(),
    })
}

/// Counter-based draws for one case.
pub struct Draw {
    key: u64,
    n: u64,
}

impl Draw {
    pub fn new(seed: Seed, case: usize) -> Self {
        Draw {
            key: hash2(seed.0, case as u64),
            n: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.n += 1;
        hash2(self.key, self.n)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (unit_f64(self.next_u64()) * (hi - lo + 1) as f64) as usize
    }

    pub fn seed(&mut self) -> Seed {
        Seed(self.next_u64())
    }

    pub fn coin(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }
}

/// Conv geometry: kernel 1 to 5, stride 1 or 2, input 4 to 32, 1 to 8 input
/// and 4 to 16 output channels.
pub fn random_conv_spec(d: &mut Draw) -> ConvSpec {
    let r = d.range(1, 5);
    let u = d.range(1, 2);
    let mut h = d.range(4.max(r), 32);
    h -= (h - r) % u;
    if h < 4 {
        h += u;
    }
    ConvSpec::new(d.range(4, 16), d.range(1, 8), r, u, h).expect("valid by construction")
}

/// FC geometry with both sides in 4 to 128.
pub fn random_fc_spec(d: &mut Draw) -> FcSpec {
    FcSpec::new(d.range(4, 128), d.range(4, 128)).expect("valid by construction")
}

/// A conv or FC layer with uniform `[-1, 1)` weights, plus a matching input.
pub fn random_linear_case<T: Scalar>(d: &mut Draw) -> (LayerDesc<T>, Tensor<T>) {
    let u = Dist::Uniform;
    if d.coin() {
        let s = random_conv_spec(d);
        let layer = ConvLayer::new(
            s,
            random_tensor(&s.weight_shape(), d.seed(), u).unwrap(),
            random_tensor(&[s.out_channels], d.seed(), u).unwrap(),
        )
        .unwrap();
        (LayerDesc::Conv(layer), random_tensor(&s.input_shape(), d.seed(), u).unwrap())
    } else {
        let s = random_fc_spec(d);
        let layer = FcLayer::new(
            s,
            random_tensor(&[s.in_features, s.out_features], d.seed(), u).unwrap(),
            random_tensor(&[s.out_features], d.seed(), u).unwrap(),
        )
        .unwrap();
        (LayerDesc::Fc(layer), random_tensor(&[1, s.in_features], d.seed(), u).unwrap())
    }
}

/// Runs one linear layer as layer 0 with its checksum verdict.
fn checked_layer<T: Scalar>(
    layer: &LayerDesc<T>,
    x: &Tensor<T>,
    cfg: &AbftConfig,
    ctx: &ExecContext,
) -> Result<(Tensor<T>, bool)> {
    let cks = single_layer_checksums(layer, 0)?;
    let (y, v) = match layer {
        LayerDesc::Conv(c) => conv_checked(x, c, &cks, cfg, ctx)?,
        LayerDesc::Fc(f) => fc_checked(x, f, &cks, cfg, ctx)?,
        LayerDesc::Nonlinear(_) => unreachable!("linear layers only"),
    };
    Ok((y, v.pass))
}

pub fn mantissa_bits<T: Scalar>() -> BitRange {
    if T::BITS == 32 {
        BitRange::F32_MANTISSA
    } else {
        BitRange::F64_MANTISSA
    }
}

/// Fault-free random layers must pass at relative tolerance `tau`.
pub fn soundness<T: Scalar, E: Executor>(n: usize, tau: f64, seed: Seed, exec: &E) -> Result<SuiteResult> {
    let cfg = AbftConfig::new(tau, ToleranceMode::Relative, 0.0)?;
    run_suite("soundness", n, exec, |i| {
        let (layer, x) = random_linear_case::<T>(&mut Draw::new(seed, i));
        Ok(checked_layer(&layer, &x, &cfg, &ExecContext::fault_free())?.1)
    })
}

/// One mantissa bit flip in one output element of a random layer must fail
/// the checksum.
pub fn detection<T: Scalar, E: Executor>(n: usize, cfg: &AbftConfig, seed: Seed, exec: &E) -> Result<SuiteResult> {
    let bits = mantissa_bits::<T>();
    run_suite("detection", n, exec, |i| {
        let mut d = Draw::new(seed, i);
        let (layer, x) = random_linear_case::<T>(&mut d);
        let out_len = layer.output_shape(x.shape())?.iter().product::<usize>();
        let fault = [ForcedFault::main(0, d.range(0, out_len - 1) as u64, d.range(bits.lo as usize, bits.hi as usize) as u32)];
        let ctx = ExecContext::fault_free().with_forced(&fault);
        Ok(!checked_layer(&layer, &x, cfg, &ctx)?.1)
    })
}

/// `conv(D, W1) + conv(D, W2)` against `conv(D, W1 + W2)`, within `tau` times
/// the checksum scale.
pub fn linearity<T: Scalar, E: Executor>(n: usize, tau: f64, seed: Seed, exec: &E) -> Result<SuiteResult> {
    let cfg = AbftConfig::new(tau, ToleranceMode::Relative, 0.0)?;
    run_suite("linearity", n, exec, |i| {
        let mut d = Draw::new(seed, i);
        let s = random_conv_spec(&mut d);
        let x: Tensor<T> = random_tensor(&s.input_shape(), d.seed(), Dist::Uniform)?;
        let w1: Tensor<T> = random_tensor(&s.weight_shape(), d.seed(), Dist::Uniform)?;
        let w2: Tensor<T> = random_tensor(&s.weight_shape(), d.seed(), Dist::Uniform)?;
        let zero = vec![T::ZERO; s.out_channels];
        let ctx = ExecContext::fault_free();
        let conv = |w: &Tensor<T>| conv2d_with(&x, &s, w.data(), &zero, &ctx, OpKind::Main);
        let separate = conv(&w1)?.add(&conv(&w2)?)?;
        let joint = conv(&w1.add(&w2)?)?;
        Ok(verify_checksums(&separate, &joint, &cfg)?.pass)
    })
}

/// Six nested loops with explicit index arithmetic; shares only the
/// accumulation order with the engine.
pub fn naive_conv<T: Scalar>(spec: &ConvSpec, d: &[T], w: &[T], b: &[T]) -> Vec<T> {
    let (m_n, ch, r, u, h) = (spec.out_channels, spec.in_channels, spec.kernel, spec.stride, spec.input_size);
    let e = (h - r) / u + 1;
    let mut out = vec![T::ZERO; m_n * e * e];
    for m in 0..m_n {
        for x in 0..e {
            for y in 0..e {
                let mut acc = T::ZERO;
                for k in 0..ch {
                    for i in 0..r {
                        for j in 0..r {
                            let dv = d[k * h * h + (u * x + i) * h + (u * y + j)];
                            let wv = w[m * ch * r * r + k * r * r + i * r + j];
                            acc += dv * wv;
                        }
                    }
                }
                out[m * e * e + x * e + y] = acc + b[m];
            }
        }
    }
    out
}

/// Engine convolution against [`naive_conv`], bit for bit.
pub fn conv_oracle<T: Scalar, E: Executor>(n: usize, seed: Seed, exec: &E) -> Result<SuiteResult> {
    run_suite("conv-oracle", n, exec, |i| {
        let mut d = Draw::new(seed, i);
        let s = random_conv_spec(&mut d);
        let x: Tensor<T> = random_tensor(&s.input_shape(), d.seed(), Dist::Normal)?;
        let w: Tensor<T> = random_tensor(&s.weight_shape(), d.seed(), Dist::Normal)?;
        let b: Tensor<T> = random_tensor(&[s.out_channels], d.seed(), Dist::Normal)?;
        let engine = conv2d_with(&x, &s, w.data(), b.data(), &ExecContext::fault_free(), OpKind::Main)?;
        let oracle = naive_conv(&s, x.data(), w.data(), b.data());
        Ok(engine.data().len() == oracle.len()
            && engine.data().iter().zip(&oracle).all(|(a, b)| a.to_bits_u64() == b.to_bits_u64()))
    })
}

/// Both variants of every nonlinear kind agree on fault-free random inputs,
/// including inputs spread over a wide range.
pub fn dmr_agreement<T: Scalar, E: Executor>(n: usize, cfg: &DmrConfig, seed: Seed, exec: &E) -> Result<SuiteResult> {
    run_suite("dmr", n, exec, |i| {
        let mut d = Draw::new(seed, i);
        let spread = [1.0, 30.0, 300.0][d.range(0, 2)];
        let (kind, shape) = match d.range(0, 2) {
            0 => (NonlinearKind::Relu, vec![d.range(1, 8), d.range(1, 24), d.range(1, 24)]),
            1 => {
                let side = 2 * d.range(1, 12);
                (NonlinearKind::MaxPool(PoolSpec { window: 2, stride: 2 }), vec![d.range(1, 8), side, side])
            }
            _ => (NonlinearKind::Softmax, vec![d.range(2, 1000)]),
        };
        let x: Tensor<T> = random_tensor(&shape, d.seed(), Dist::Normal)?.scale(T::from_f64(spread));
        let (_, v) = dmr_execute(&x, kind, cfg, &ExecContext::fault_free())?;
        Ok(v.pass)
    })
}

/// Mantissa bits whose flip moves a value by at least 2^-45 of itself.
pub fn dmr_flip_bits<T: Scalar>() -> (u32, u32) {
    (T::MANTISSA_BITS.saturating_sub(45).max(5), T::MANTISSA_BITS - 1)
}

/// One flipped mantissa bit in one variant's output must fail the comparison.
pub fn dmr_detection<T: Scalar, E: Executor>(n: usize, cfg: &DmrConfig, seed: Seed, exec: &E) -> Result<SuiteResult> {
    let (lo, hi) = dmr_flip_bits::<T>();
    run_suite("dmr-detect", n, exec, |i| {
        let mut d = Draw::new(seed, i);
        let (kind, shape) = match d.range(0, 2) {
            0 => (NonlinearKind::Relu, vec![d.range(1, 8), d.range(1, 16), d.range(1, 16)]),
            1 => {
                let side = 2 * d.range(1, 8);
                (NonlinearKind::MaxPool(PoolSpec { window: 2, stride: 2 }), vec![d.range(1, 8), side, side])
            }
            _ => (NonlinearKind::Softmax, vec![d.range(2, 1000)]),
        };
        let x: Tensor<T> = random_tensor(&shape, d.seed(), Dist::Normal)?;
        let out_len: usize = kind.output_shape(&shape)?.iter().product();
        let variant = if d.coin() { Variant::A } else { Variant::B };
        let fault = [ForcedFault::nonlinear(0, variant, d.range(0, out_len - 1) as u64, d.range(lo as usize, hi as usize) as u32)];
        let (_, v) = dmr_execute(&x, kind, cfg, &ExecContext::fault_free().with_forced(&fault))?;
        Ok(!v.pass)
    })
}

/// The flip used by end-to-end case `i`: a random output element of a random
/// conv or FC layer of `model`, at a random mantissa bit.
pub fn model_fault<T: Scalar>(model: &ModelGraph<T>, seed: Seed, i: usize) -> Result<ForcedFault> {
    let shapes = model.topology().shapes()?;
    let linear: Vec<usize> = (0..model.layers().len()).filter(|&l| model.layers()[l].kind().is_linear()).collect();
    anyhow::ensure!(!linear.is_empty(), "model has no conv or fc layer");
    let bits = mantissa_bits::<T>();
    let mut d = Draw::new(seed, i);
    let l = linear[d.range(0, linear.len() - 1)];
    let out_len: usize = shapes[l + 1].iter().product();
    Ok(ForcedFault::main(
        l as u32,
        d.range(0, out_len - 1) as u64,
        d.range(bits.lo as usize, bits.hi as usize) as u32,
    ))
}

/// Fault-free checked passes over the test set; every verdict must pass.
pub fn model_clean<T: Scalar, E: Executor>(
    model: &ModelGraph<T>,
    set: &TestSet,
    n: usize,
    cfg: &CheckConfig,
    exec: &E,
) -> Result<SuiteResult> {
    let cks = precompute_weight_checksums(model);
    run_suite("model-clean", n, exec, |i| {
        Ok(checked_forward(model, &cks, &set.input(i), cfg, &ExecContext::fault_free())?.pass())
    })
}

/// Forced flips per [`model_fault`]: the checked pass must fail at exactly
/// the faulted layer.
pub fn end_to_end<T: Scalar, E: Executor>(
    model: &ModelGraph<T>,
    set: &TestSet,
    n: usize,
    cfg: &CheckConfig,
    seed: Seed,
    exec: &E,
) -> Result<SuiteResult> {
    let cks = precompute_weight_checksums(model);
    run_suite("end-to-end", n, exec, |i| {
        let fault = [model_fault(model, seed, i)?];
        let ctx = ExecContext::fault_free().with_forced(&fault);
        let pass = checked_forward(model, &cks, &set.input(i), cfg, &ctx)?;
        let failing: Vec<u32> = pass.verdicts.iter().filter(|v| !v.pass()).map(|v| v.layer()).collect();
        Ok(failing == [fault[0].layer])
    })
}
