//! Reference DNN layers and the model graph.
//!
//! Convolutions and fully-connected layers accumulate in a fixed order
//! (input channel, then kernel row, then kernel column, all ascending), add
//! the bias last, and only then pass the value through the fault injector.

mod conv;
mod fc;
mod models;
mod nonlinear;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

pub use conv::{conv2d, conv2d_with};
pub use fc::{fc, fc_with};
pub use models::{
    build_lenet, build_vgg16, build_vgg16_scaled, lenet_topology, vgg16_topology, LayerSpec, Topology, VggScale, VGG16_INPUT,
};
pub use nonlinear::nonlinear;

use crate::error::{Error, Result};
use crate::faultsim::ExecContext;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Convolution geometry. No padding; square inputs and kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub input_size: usize,
}

impl ConvSpec {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        stride: usize,
        input_size: usize,
    ) -> Result<Self> {
        let spec = ConvSpec {
            out_channels,
            in_channels,
            kernel,
            stride,
            input_size,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ConvSpec {
            out_channels: m,
            in_channels: ch,
            kernel: r,
            stride: u,
            input_size: h,
        } = *self;
        if m == 0 || ch == 0 || r == 0 || u == 0 || h == 0 {
            return Err(Error::spec("conv dimensions must be >= 1"));
        }
        if r > h {
            return Err(Error::spec(alloc::format!("kernel {r} larger than input {h}")));
        }
        if (h - r) % u != 0 {
            return Err(Error::spec(alloc::format!(
                "(H - R + U) / U not exact for H={h}, R={r}, U={u}"
            )));
        }
        Ok(())
    }

    /// Output spatial size `E = (H - R + U) / U`.
    #[inline]
    pub fn output_size(&self) -> usize {
        (self.input_size - self.kernel + self.stride) / self.stride
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.in_channels, self.input_size, self.input_size]
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let e = self.output_size();
        [self.out_channels, e, e]
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    /// Multiply-accumulates per reduction (`Ch * R * R`).
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcSpec {
    pub in_features: usize,
    pub out_features: usize,
}

impl FcSpec {
    pub fn new(in_features: usize, out_features: usize) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::spec("fc dimensions must be >= 1"));
        }
        Ok(FcSpec {
            in_features,
            out_features,
        })
    }
}

/// Max-pooling window over square `C x H x H` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn output_size(&self, input: usize) -> Result<usize> {
        if self.window == 0 || self.stride == 0 || self.window > input {
            return Err(Error::spec("pool window must be in [1, H]"));
        }
        if !(input - self.window).is_multiple_of(self.stride) {
            return Err(Error::spec(alloc::format!(
                "pool {}x{}/{} does not tile input {input}",
                self.window,
                self.window,
                self.stride
            )));
        }
        Ok((input - self.window) / self.stride + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearKind {
    Relu,
    MaxPool(PoolSpec),
    Softmax,
}

/// Coarse layer category, used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    Fc,
    Relu,
    MaxPool,
    Softmax,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Fc => "fc",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Softmax => "softmax",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Fc)
    }
}

impl NonlinearKind {
    pub fn kind(&self) -> LayerKind {
        match self {
            NonlinearKind::Relu => LayerKind::Relu,
            NonlinearKind::MaxPool(_) => LayerKind::MaxPool,
            NonlinearKind::Softmax => LayerKind::Softmax,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            NonlinearKind::Relu | NonlinearKind::Softmax => Ok(input.to_vec()),
            NonlinearKind::MaxPool(p) => {
                if input.len() != 3 || input[1] != input[2] {
                    return Err(Error::spec("maxpool expects a square C x H x H input"));
                }
                let e = p.output_size(input[1])?;
                Ok(vec![input[0], e, e])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T = f64> {
    pub spec: ConvSpec,
    /// `M x Ch x R x R`
    pub weights: Tensor<T>,
    /// length `M`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(spec: ConvSpec, weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        spec.validate()?;
        if weights.shape() != spec.weight_shape() {
            return Err(Error::shape(&spec.weight_shape(), weights.shape()));
        }
        if bias.len() != spec.out_channels {
            return Err(Error::shape(&[spec.out_channels], bias.shape()));
        }
        Ok(ConvLayer {
            spec,
            weights,
            bias,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T = f64> {
    pub spec: FcSpec,
    /// `K x M`
    pub weights: Tensor<T>,
    /// length `M`
    pub bias: Tensor<T>,
}

impl<T: Scalar> FcLayer<T> {
    pub fn new(spec: FcSpec, weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let ws = [spec.in_features, spec.out_features];
        if weights.shape() != ws {
            return Err(Error::shape(&ws, weights.shape()));
        }
        if bias.len() != spec.out_features {
            return Err(Error::shape(&[spec.out_features], bias.shape()));
        }
        Ok(FcLayer {
            spec,
            weights,
            bias,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerDesc<T = f64> {
    Conv(ConvLayer<T>),
    Fc(FcLayer<T>),
    Nonlinear(NonlinearKind),
}

impl<T: Scalar> LayerDesc<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerDesc::Conv(_) => LayerKind::Conv,
            LayerDesc::Fc(_) => LayerKind::Fc,
            LayerDesc::Nonlinear(n) => n.kind(),
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            LayerDesc::Conv(c) => {
                if input != c.spec.input_shape() {
                    return Err(Error::shape(&c.spec.input_shape(), input));
                }
                Ok(c.spec.output_shape().to_vec())
            }
            LayerDesc::Fc(f) => {
                let k: usize = input.iter().product();
                if k != f.spec.in_features {
                    return Err(Error::shape(&[1, f.spec.in_features], input));
                }
                Ok(vec![1, f.spec.out_features])
            }
            LayerDesc::Nonlinear(n) => n.output_shape(input),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            LayerDesc::Conv(c) => c.weights.len() + c.bias.len(),
            LayerDesc::Fc(f) => f.weights.len() + f.bias.len(),
            LayerDesc::Nonlinear(_) => 0,
        }
    }
}

/// An ordered, shape-checked list of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph<T = f64> {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerDesc<T>>,
}

impl<T: Scalar> ModelGraph<T> {
    pub fn new(name: impl Into<String>, input_shape: &[usize], layers: Vec<LayerDesc<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::spec("model has no layers"));
        }
        let mut shape = input_shape.to_vec();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(ModelGraph {
            name: name.into(),
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerDesc<T>] {
        &self.layers
    }

    pub fn output_shape(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        for layer in &self.layers {
            shape = layer.output_shape(&shape).expect("validated at construction");
        }
        shape
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|l| l.kind() == kind).count()
    }

    /// The architecture without weights.
    pub fn topology(&self) -> Topology {
        Topology {
            name: self.name.clone(),
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    LayerDesc::Conv(c) => LayerSpec::Conv(c.spec),
                    LayerDesc::Fc(f) => LayerSpec::Fc(f.spec),
                    LayerDesc::Nonlinear(k) => LayerSpec::Nonlinear(*k),
                })
                .collect(),
        }
    }
}

/// Runs one layer without any checking. Nonlinear layers use variant A.
pub fn run_layer<T: Scalar>(layer: &LayerDesc<T>, x: &Tensor<T>, ctx: &ExecContext) -> Result<Tensor<T>> {
    match layer {
        LayerDesc::Conv(c) => conv2d(x, c, ctx),
        LayerDesc::Fc(f) => fc(x, f, ctx),
        LayerDesc::Nonlinear(k) => nonlinear(x, *k, crate::faultsim::Variant::A, ctx),
    }
}

/// Unprotected forward pass: no checksums, no redundancy.
pub fn forward<T: Scalar>(model: &ModelGraph<T>, input: &Tensor<T>, ctx: &ExecContext) -> Result<Tensor<T>> {
    if input.shape() != model.input_shape() {
        return Err(Error::shape(model.input_shape(), input.shape()));
    }
    let mut x = input.clone();
    for (i, layer) in model.layers().iter().enumerate() {
        x = run_layer(layer, &x, &ctx.with_layer(i as u32))?;
    }
    Ok(x)
}
