//! A full forward pass with every layer checked.

use alloc::vec::Vec;

use crate::abft::{conv_checked, fc_checked, AbftConfig, ChecksumVerdict, WeightChecksums};
use crate::dmr::{dmr_execute, DmrConfig, DmrVerdict};
use crate::error::{Error, Result};
use crate::faultsim::ExecContext;
use crate::layers::{LayerDesc, LayerKind, ModelGraph};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One layer's check result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    Checksum(ChecksumVerdict),
    Dmr(DmrVerdict),
}

impl Verdict {
    pub fn pass(&self) -> bool {
        match self {
            Verdict::Checksum(v) => v.pass,
            Verdict::Dmr(v) => v.pass,
        }
    }

    pub fn layer(&self) -> u32 {
        match self {
            Verdict::Checksum(v) => v.layer,
            Verdict::Dmr(v) => v.layer,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Verdict::Checksum(v) => v.kind,
            Verdict::Dmr(v) => v.kind,
        }
    }

    pub fn discrepancy(&self) -> f64 {
        match self {
            Verdict::Checksum(v) => v.discrepancy,
            Verdict::Dmr(v) => v.discrepancy,
        }
    }

    pub fn scale(&self) -> f64 {
        match self {
            Verdict::Checksum(v) => v.scale,
            Verdict::Dmr(v) => v.scale,
        }
    }

    pub fn is_checksum(&self) -> bool {
        matches!(self, Verdict::Checksum(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckConfig {
    pub abft: AbftConfig,
    pub dmr: DmrConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckedPass<T = f64> {
    pub output: Tensor<T>,
    pub verdicts: Vec<Verdict>,
}

impl<T> CheckedPass<T> {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass())
    }

    pub fn abft_failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.is_checksum() && !v.pass())
    }

    pub fn dmr_failed(&self) -> bool {
        self.verdicts.iter().any(|v| !v.is_checksum() && !v.pass())
    }
}

/// Runs every layer under `ctx`; conv/FC through checksums, nonlinear layers
/// through DMR. The pass always runs to the end so all verdicts are known.
pub fn checked_forward<T: Scalar>(
    model: &ModelGraph<T>,
    cks: &WeightChecksums<T>,
    input: &Tensor<T>,
    cfg: &CheckConfig,
    ctx: &ExecContext,
) -> Result<CheckedPass<T>> {
    if input.shape() != model.input_shape() {
        return Err(Error::shape(model.input_shape(), input.shape()));
    }
    if cks.len() != model.layers().len() {
        return Err(Error::spec("checksums do not belong to this model"));
    }
    let mut x = input.clone();
    let mut verdicts = Vec::with_capacity(model.layers().len());
    for (i, layer) in model.layers().iter().enumerate() {
        let lctx = ctx.with_layer(i as u32);
        let (y, v) = match layer {
            LayerDesc::Conv(c) => {
                let (y, v) = conv_checked(&x, c, cks, &cfg.abft, &lctx)?;
                (y, Verdict::Checksum(v))
            }
            LayerDesc::Fc(f) => {
                let (y, v) = fc_checked(&x, f, cks, &cfg.abft, &lctx)?;
                (y, Verdict::Checksum(v))
            }
            LayerDesc::Nonlinear(k) => {
                let (y, v) = dmr_execute(&x, *k, &cfg.dmr, &lctx)?;
                (y, Verdict::Dmr(v))
            }
        };
        verdicts.push(v);
        x = y;
    }
    Ok(CheckedPass { output: x, verdicts })
}
