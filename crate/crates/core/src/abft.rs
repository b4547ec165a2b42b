//! Checksum protection for convolutions and fully-connected layers.
//!
//! For a conv layer the channel-summed kernel `W_sigma = sum_m W_m` and bias
//! sum `b_sigma` are precomputed once. At run time the output checksum
//! `sum_m O_m` (an `E x E` map) must equal the input checksum
//! `conv(D, W_sigma) + b_sigma`. FC layers use the row sums of the weight
//! matrix as an extra output column. Both checksum paths run under the same
//! fault context as the layer itself, so a corrupted checksum shows up as a
//! (safe-side) mismatch too.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faultsim::{ExecContext, OpKind, Variant};
use crate::layers::{conv2d, fc, ConvLayer, ConvSpec, FcLayer, LayerDesc, LayerKind, ModelGraph};
use crate::scalar::Scalar;
use crate::sum::{compensated_sum, CompensatedSum};
use crate::tensor::{max_abs_diff, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceMode {
    /// Threshold is `tau * scale + floor`.
    Relative,
    /// Threshold is `tau + floor`.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbftConfig {
    pub tau: f64,
    pub mode: ToleranceMode,
    pub floor: f64,
}

impl AbftConfig {
    pub const F64: AbftConfig = AbftConfig {
        tau: 6e-14,
        mode: ToleranceMode::Relative,
        floor: 0.0,
    };
    pub const F32: AbftConfig = AbftConfig {
        tau: 1e-4,
        mode: ToleranceMode::Relative,
        floor: 1e-6,
    };

    pub fn new(tau: f64, mode: ToleranceMode, floor: f64) -> Result<Self> {
        let cfg = AbftConfig { tau, mode, floor };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config("tau must be positive"));
        }
        if !(self.floor >= 0.0) {
            return Err(Error::config("absolute floor must be non-negative"));
        }
        Ok(())
    }

    /// Default for the element type.
    pub fn for_scalar<T: Scalar>() -> Self {
        if T::BITS == 64 {
            Self::F64
        } else {
            Self::F32
        }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        AbftConfig { tau, ..self }
    }

    pub fn threshold(&self, scale: f64) -> f64 {
        match self.mode {
            ToleranceMode::Relative => self.tau * scale + self.floor,
            ToleranceMode::Absolute => self.tau + self.floor,
        }
    }
}

impl Default for AbftConfig {
    fn default() -> Self {
        Self::F64
    }
}

/// Outcome of comparing the two checksums of one linear layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChecksumVerdict {
    pub layer: u32,
    pub kind: LayerKind,
    pub pass: bool,
    /// Largest absolute difference between checksum cells.
    pub discrepancy: f64,
    /// Largest checksum magnitude, at least 1.
    pub scale: f64,
}

impl ChecksumVerdict {
    pub fn labeled(self, layer: u32, kind: LayerKind) -> Self {
        ChecksumVerdict { layer, kind, ..self }
    }
}

/// Precomputed checksum data for one linear layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerChecksum<T = f64> {
    Conv {
        /// `Ch x R x R`, the sum of all output-channel kernels.
        w_sigma: Tensor<T>,
        b_sigma: T,
    },
    Fc {
        /// `b_check[k] = sum_m B[k][m]`
        b_check: Tensor<T>,
        bias_sum: T,
    },
}

/// Checksums for every layer of a model; `None` for nonlinear layers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightChecksums<T = f64> {
    layers: Vec<Option<LayerChecksum<T>>>,
}

impl<T: Scalar> WeightChecksums<T> {
    pub fn get(&self, layer: usize) -> Option<&LayerChecksum<T>> {
        self.layers.get(layer).and_then(|c| c.as_ref())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Compensated sum over `axis`, ascending.
pub fn checksum_axis_sum<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let shape = t.shape();
    if axis >= shape.len() {
        return Err(Error::InvalidAxis {
            axis,
            rank: shape.len(),
        });
    }
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let d = t.data();
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let mut acc = CompensatedSum::new();
            for a in 0..n {
                acc.add(d[(o * n + a) * inner + i]);
            }
            out.push(acc.value());
        }
    }
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    Tensor::new(&out_shape, out)
}

pub fn conv_checksum<T: Scalar>(layer: &ConvLayer<T>) -> Result<LayerChecksum<T>> {
    Ok(LayerChecksum::Conv {
        w_sigma: checksum_axis_sum(&layer.weights, 0)?,
        b_sigma: compensated_sum(layer.bias.data()),
    })
}

pub fn fc_checksum<T: Scalar>(layer: &FcLayer<T>) -> Result<LayerChecksum<T>> {
    Ok(LayerChecksum::Fc {
        b_check: checksum_axis_sum(&layer.weights, 1)?,
        bias_sum: compensated_sum(layer.bias.data()),
    })
}

/// Offline step: sums the weights of every linear layer.
pub fn precompute_weight_checksums<T: Scalar>(model: &ModelGraph<T>) -> WeightChecksums<T> {
    let layers = model
        .layers()
        .iter()
        .map(|l| match l {
            LayerDesc::Conv(c) => Some(conv_checksum(c).expect("weights validated by ConvLayer")),
            LayerDesc::Fc(f) => Some(fc_checksum(f).expect("weights validated by FcLayer")),
            LayerDesc::Nonlinear(_) => None,
        })
        .collect();
    WeightChecksums { layers }
}

/// Compares an output checksum against an input checksum.
///
/// The returned verdict carries layer 0 / conv; use
/// [`ChecksumVerdict::labeled`] to attach the real layer.
pub fn verify<T: Scalar>(out_ck: &Tensor<T>, in_ck: &Tensor<T>, cfg: &AbftConfig) -> Result<ChecksumVerdict> {
    let discrepancy = max_abs_diff(out_ck, in_ck)?.to_f64();
    let scale = out_ck.max_abs().to_f64().max(in_ck.max_abs().to_f64()).max(1.0);
    let threshold = cfg.threshold(scale);
    let pass = discrepancy.is_finite() && scale.is_finite() && discrepancy <= threshold;
    Ok(ChecksumVerdict {
        layer: 0,
        kind: LayerKind::Conv,
        pass,
        discrepancy,
        scale,
    })
}

/// Indices of checksum cells whose individual difference exceeds the
/// threshold derived from the whole-map scale.
pub fn failing_cells<T: Scalar>(out_ck: &Tensor<T>, in_ck: &Tensor<T>, cfg: &AbftConfig) -> Result<Vec<usize>> {
    if out_ck.shape() != in_ck.shape() {
        return Err(Error::shape(out_ck.shape(), in_ck.shape()));
    }
    let scale = out_ck.max_abs().to_f64().max(in_ck.max_abs().to_f64()).max(1.0);
    let threshold = cfg.threshold(scale);
    Ok(out_ck
        .data()
        .iter()
        .zip(in_ck.data())
        .enumerate()
        .filter(|(_, (&a, &b))| {
            let d = (a - b).abs().to_f64();
            !(d <= threshold)
        })
        .map(|(i, _)| i)
        .collect())
}

/// Output, output checksum and input checksum of a conv layer.
pub struct ConvChecksums<T> {
    pub output: Tensor<T>,
    pub out_ck: Tensor<T>,
    pub in_ck: Tensor<T>,
}

fn conv_entry<T: Scalar>(cks: &WeightChecksums<T>, layer: u32) -> Result<(&Tensor<T>, T)> {
    match cks.get(layer as usize) {
        Some(LayerChecksum::Conv { w_sigma, b_sigma }) => Ok((w_sigma, *b_sigma)),
        _ => Err(Error::spec(alloc::format!("no conv checksum for layer {layer}"))),
    }
}

fn fc_entry<T: Scalar>(cks: &WeightChecksums<T>, layer: u32) -> Result<(&Tensor<T>, T)> {
    match cks.get(layer as usize) {
        Some(LayerChecksum::Fc { b_check, bias_sum }) => Ok((b_check, *bias_sum)),
        _ => Err(Error::spec(alloc::format!("no fc checksum for layer {layer}"))),
    }
}

/// Input checksum `conv(D, W_sigma) + b_sigma` as an `E x E` map.
pub fn check_conv<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    w_sigma: &[T],
    b_sigma: T,
    ctx: &ExecContext,
) -> Result<Tensor<T>> {
    if input.shape() != spec.input_shape() {
        return Err(Error::shape(&spec.input_shape(), input.shape()));
    }
    if w_sigma.len() != spec.fan_in() {
        return Err(Error::shape(&[spec.in_channels, spec.kernel, spec.kernel], &[w_sigma.len()]));
    }
    let (ch, r, u, h) = (spec.in_channels, spec.kernel, spec.stride, spec.input_size);
    let e = spec.output_size();
    let d = input.data();
    let mut out = Vec::with_capacity(e * e);
    let mut acc = vec![CompensatedSum::new(); e];
    for x in 0..e {
        acc.fill(CompensatedSum::new());
        for k in 0..ch {
            for i in 0..r {
                let row = &d[(k * h + u * x + i) * h..][..h];
                let wrow = &w_sigma[(k * r + i) * r..][..r];
                for (j, &wv) in wrow.iter().enumerate() {
                    for (y, a) in acc.iter_mut().enumerate() {
                        a.add(row[u * y + j] * wv);
                    }
                }
            }
        }
        for (y, a) in acc.iter_mut().enumerate() {
            a.add(b_sigma);
            let idx = (x * e + y) as u64;
            out.push(ctx.maybe_inject(ctx.site(OpKind::Check, Variant::A, idx), a.value()));
        }
    }
    Tensor::new(&[e, e], out)
}

/// Input checksum `A . b_check + sum(bias)` as a one-element tensor.
pub fn check_fc<T: Scalar>(input: &Tensor<T>, b_check: &[T], bias_sum: T, ctx: &ExecContext) -> Result<Tensor<T>> {
    if input.len() != b_check.len() {
        return Err(Error::shape(&[1, b_check.len()], input.shape()));
    }
    let mut acc = CompensatedSum::new();
    for (&a, &b) in input.data().iter().zip(b_check) {
        acc.add(a * b);
    }
    acc.add(bias_sum);
    let v = ctx.maybe_inject(ctx.site(OpKind::Check, Variant::A, 0), acc.value());
    Tensor::new(&[1], vec![v])
}

/// Runs a conv layer and both checksum computations under `ctx`.
pub fn conv_checksums<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    cks: &WeightChecksums<T>,
    ctx: &ExecContext,
) -> Result<ConvChecksums<T>> {
    let (w_sigma, b_sigma) = conv_entry(cks, ctx.layer())?;
    if w_sigma.shape() != [layer.spec.in_channels, layer.spec.kernel, layer.spec.kernel] {
        return Err(Error::shape(
            &[layer.spec.in_channels, layer.spec.kernel, layer.spec.kernel],
            w_sigma.shape(),
        ));
    }
    let output = conv2d(input, layer, ctx)?;
    let in_ck = check_conv(input, &layer.spec, w_sigma.data(), b_sigma, ctx)?;
    let out_ck = checksum_axis_sum(&output, 0)?;
    Ok(ConvChecksums { output, out_ck, in_ck })
}

/// Conv layer with checksum verification.
pub fn conv_checked<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    cks: &WeightChecksums<T>,
    cfg: &AbftConfig,
    ctx: &ExecContext,
) -> Result<(Tensor<T>, ChecksumVerdict)> {
    let c = conv_checksums(input, layer, cks, ctx)?;
    let verdict = verify(&c.out_ck, &c.in_ck, cfg)?.labeled(ctx.layer(), LayerKind::Conv);
    Ok((c.output, verdict))
}

/// FC layer with checksum verification: `sum_m C_m` against
/// `A . b_check + sum(bias)`.
pub fn fc_checked<T: Scalar>(
    input: &Tensor<T>,
    layer: &FcLayer<T>,
    cks: &WeightChecksums<T>,
    cfg: &AbftConfig,
    ctx: &ExecContext,
) -> Result<(Tensor<T>, ChecksumVerdict)> {
    let (b_check, bias_sum) = fc_entry(cks, ctx.layer())?;
    if b_check.len() != layer.spec.in_features {
        return Err(Error::shape(&[layer.spec.in_features], b_check.shape()));
    }
    let output = fc(input, layer, ctx)?;
    let in_ck = check_fc(input, b_check.data(), bias_sum, ctx)?;
    let out_ck = checksum_axis_sum(&output, 1)?;
    let verdict = verify(&out_ck, &in_ck, cfg)?.labeled(ctx.layer(), LayerKind::Fc);
    Ok((output, verdict))
}

/// Checksum verdict plus the three tensors, for diagnostics.
pub fn fc_checksums<T: Scalar>(
    input: &Tensor<T>,
    layer: &FcLayer<T>,
    cks: &WeightChecksums<T>,
    ctx: &ExecContext,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (b_check, bias_sum) = fc_entry(cks, ctx.layer())?;
    let output = fc(input, layer, ctx)?;
    let in_ck = check_fc(input, b_check.data(), bias_sum, ctx)?;
    let out_ck = checksum_axis_sum(&output, 1)?;
    Ok((output, out_ck, in_ck))
}

/// Builds single-layer checksum tables, for checking a layer outside a model.
pub fn single_layer_checksums<T: Scalar>(layer: &LayerDesc<T>, index: usize) -> Result<WeightChecksums<T>> {
    let entry = match layer {
        LayerDesc::Conv(c) => conv_checksum(c)?,
        LayerDesc::Fc(f) => fc_checksum(f)?,
        LayerDesc::Nonlinear(_) => return Err(Error::spec("nonlinear layers carry no checksum")),
    };
    let mut layers = vec![None; index + 1];
    layers[index] = Some(entry);
    Ok(WeightChecksums { layers })
}
