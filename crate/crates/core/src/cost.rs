//! Analytic operation counts.
//!
//! One multiply, add, compare or exponential counts as one operation. Weight
//! checksums are computed offline and are not counted.

use crate::layers::{ConvSpec, FcSpec, LayerSpec, NonlinearKind, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCount {
    /// Unprotected inference.
    pub base: u64,
    /// Extra work for conv/FC checksums and their comparison.
    pub abft: u64,
    /// Extra work for the second nonlinear variant and the comparison.
    pub dmr: u64,
}

impl OpCount {
    pub fn abft_overhead(&self) -> f64 {
        self.abft as f64 / self.base as f64
    }

    pub fn dmr_overhead(&self) -> f64 {
        self.dmr as f64 / self.base as f64
    }

    pub fn total_overhead(&self) -> f64 {
        (self.abft + self.dmr) as f64 / self.base as f64
    }

    fn add(&mut self, o: OpCount) {
        self.base += o.base;
        self.abft += o.abft;
        self.dmr += o.dmr;
    }
}

pub fn conv_ops(c: &ConvSpec) -> OpCount {
    let plane = (c.output_size() * c.output_size()) as u64;
    let (m, fan) = (c.out_channels as u64, c.fan_in() as u64);
    let per_output = 2 * fan + 1;
    OpCount {
        base: m * plane * per_output,
        // check conv, channel sum of outputs, subtract and compare per cell
        abft: plane * per_output + plane * m + 2 * plane,
        dmr: 0,
    }
}

pub fn fc_ops(f: &FcSpec) -> OpCount {
    let (k, m) = (f.in_features as u64, f.out_features as u64);
    OpCount {
        base: m * (2 * k + 1),
        abft: (2 * k + 1) + m + 2,
        dmr: 0,
    }
}

fn nonlinear_ops(kind: &NonlinearKind, input: &[usize]) -> u64 {
    let n: usize = input.iter().product();
    match kind {
        NonlinearKind::Relu => n as u64,
        NonlinearKind::MaxPool(p) => {
            let e = p.output_size(input[1]).unwrap_or(0);
            (input[0] * e * e * (p.window * p.window - 1)) as u64
        }
        // exp, accumulate, normalize
        NonlinearKind::Softmax => 3 * n as u64,
    }
}

/// Per-layer counts followed by the model total.
pub fn op_count(topology: &Topology) -> crate::Result<OpCount> {
    let shapes = topology.shapes()?;
    let mut total = OpCount::default();
    for (layer, input) in topology.layers.iter().zip(&shapes) {
        let c = match layer {
            LayerSpec::Conv(c) => conv_ops(c),
            LayerSpec::Fc(f) => fc_ops(f),
            LayerSpec::Nonlinear(k) => {
                let ops = nonlinear_ops(k, input);
                let outputs: usize = k.output_shape(input)?.iter().product();
                OpCount {
                    base: ops,
                    abft: 0,
                    dmr: ops + 2 * outputs as u64,
                }
            }
        };
        total.add(c);
    }
    Ok(total)
}
