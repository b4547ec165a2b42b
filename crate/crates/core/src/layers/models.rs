//! LeNet-5 and VGG-16 builders.
//!
//! Convolutions have no padding, so VGG-16's input is enlarged to 212x212
//! which lets every 3x3 conv and 2x2 pool chain down to a 1x1 map before
//! the classifier.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{ConvLayer, ConvSpec, FcLayer, FcSpec, LayerDesc, LayerKind, ModelGraph, NonlinearKind, PoolSpec};
use crate::error::Result;
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::{random_tensor, Dist, Tensor};

/// Layer geometry without weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Fc(FcSpec),
    Nonlinear(NonlinearKind),
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv(_) => LayerKind::Conv,
            LayerSpec::Fc(_) => LayerKind::Fc,
            LayerSpec::Nonlinear(n) => n.kind(),
        }
    }
}

/// A model architecture: input shape plus an ordered list of layer specs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Topology {
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv(c) => c.out_channels * c.fan_in() + c.out_channels,
                LayerSpec::Fc(f) => f.in_features * f.out_features + f.out_features,
                LayerSpec::Nonlinear(_) => 0,
            })
            .sum()
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.layers.iter().filter(|l| l.kind() == kind).count()
    }

    /// Shape entering each layer, followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        let mut cur = self.input_shape.clone();
        for l in &self.layers {
            cur = match l {
                LayerSpec::Conv(c) => {
                    if cur != c.input_shape() {
                        return Err(crate::Error::shape(&c.input_shape(), &cur));
                    }
                    c.output_shape().to_vec()
                }
                LayerSpec::Fc(f) => {
                    if cur.iter().product::<usize>() != f.in_features {
                        return Err(crate::Error::shape(&[1, f.in_features], &cur));
                    }
                    vec![1, f.out_features]
                }
                LayerSpec::Nonlinear(n) => n.output_shape(&cur)?,
            };
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    /// Draws weights from `seed`. Weights are He-uniform
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`) so activations stay O(1);
    /// biases are `U(-0.1, 0.1)`.
    pub fn build<T: Scalar>(&self, seed: Seed) -> Result<ModelGraph<T>> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let wseed = seed.derive(2 * i as u64);
            let bseed = seed.derive(2 * i as u64 + 1);
            let desc = match *spec {
                LayerSpec::Conv(c) => {
                    let w = init_weights(&c.weight_shape(), c.fan_in(), wseed)?;
                    let b = init_bias(c.out_channels, bseed)?;
                    LayerDesc::Conv(ConvLayer::new(c, w, b)?)
                }
                LayerSpec::Fc(f) => {
                    let w = init_weights(&[f.in_features, f.out_features], f.in_features, wseed)?;
                    let b = init_bias(f.out_features, bseed)?;
                    LayerDesc::Fc(FcLayer::new(f, w, b)?)
                }
                LayerSpec::Nonlinear(n) => LayerDesc::Nonlinear(n),
            };
            layers.push(desc);
        }
        ModelGraph::new(self.name.clone(), &self.input_shape, layers)
    }
}

fn init_weights<T: Scalar>(shape: &[usize], fan_in: usize, seed: Seed) -> Result<Tensor<T>> {
    let limit = libm::sqrt(6.0 / fan_in as f64);
    let raw: Tensor<f64> = random_tensor(shape, seed, Dist::Uniform)?;
    Tensor::new(shape, raw.data().iter().map(|&v| T::from_f64(v * limit)).collect())
}

fn init_bias<T: Scalar>(n: usize, seed: Seed) -> Result<Tensor<T>> {
    let raw: Tensor<f64> = random_tensor(&[n], seed, Dist::Uniform)?;
    Tensor::new(&[n], raw.data().iter().map(|&v| T::from_f64(0.1 * v)).collect())
}

const POOL2: NonlinearKind = NonlinearKind::MaxPool(PoolSpec { window: 2, stride: 2 });

/// LeNet-5: two conv/pool blocks then 400-120-84-10 classifier.
pub fn lenet_topology() -> Topology {
    let conv = |m, ch, h| LayerSpec::Conv(ConvSpec::new(m, ch, 5, 1, h).expect("static geometry"));
    let fc = |k, m| LayerSpec::Fc(FcSpec::new(k, m).expect("static geometry"));
    let relu = LayerSpec::Nonlinear(NonlinearKind::Relu);
    Topology {
        name: "lenet".into(),
        input_shape: vec![1, 32, 32],
        layers: vec![
            conv(6, 1, 32),
            relu,
            LayerSpec::Nonlinear(POOL2),
            conv(16, 6, 14),
            relu,
            LayerSpec::Nonlinear(POOL2),
            fc(400, 120),
            relu,
            fc(120, 84),
            relu,
            fc(84, 10),
            LayerSpec::Nonlinear(NonlinearKind::Softmax),
        ],
    }
}

/// Width/size knobs for VGG-16. [`VggScale::STANDARD`] is the published
/// network; narrower variants keep the same topology for fast simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VggScale {
    /// Every conv channel count is divided by this.
    pub width_divisor: usize,
    pub fc_width: usize,
    pub classes: usize,
}

impl VggScale {
    pub const STANDARD: VggScale = VggScale {
        width_divisor: 1,
        fc_width: 4096,
        classes: 1000,
    };
    /// 1/16 channel width, 64-wide classifier, 10 classes.
    pub const SMALL: VggScale = VggScale {
        width_divisor: 16,
        fc_width: 64,
        classes: 10,
    };
}

pub const VGG16_INPUT: usize = 212;

pub fn vgg16_topology(scale: VggScale) -> Topology {
    let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
    let div = scale.width_divisor.max(1);
    let mut layers = Vec::new();
    let (mut ch, mut h) = (3usize, VGG16_INPUT);
    for (n, width) in blocks {
        let m = (width / div).max(1);
        for _ in 0..n {
            let spec = ConvSpec::new(m, ch, 3, 1, h).expect("static geometry");
            layers.push(LayerSpec::Conv(spec));
            layers.push(LayerSpec::Nonlinear(NonlinearKind::Relu));
            ch = m;
            h = spec.output_size();
        }
        layers.push(LayerSpec::Nonlinear(POOL2));
        h /= 2;
    }
    let fc = |k, m| LayerSpec::Fc(FcSpec::new(k, m).expect("static geometry"));
    layers.push(fc(ch * h * h, scale.fc_width));
    layers.push(LayerSpec::Nonlinear(NonlinearKind::Relu));
    layers.push(fc(scale.fc_width, scale.fc_width));
    layers.push(LayerSpec::Nonlinear(NonlinearKind::Relu));
    layers.push(fc(scale.fc_width, scale.classes));
    layers.push(LayerSpec::Nonlinear(NonlinearKind::Softmax));
    let name = if scale == VggScale::STANDARD {
        String::from("vgg16")
    } else {
        alloc::format!("vgg16-w{}", div)
    };
    Topology {
        name,
        input_shape: vec![3, VGG16_INPUT, VGG16_INPUT],
        layers,
    }
}

pub fn build_lenet<T: Scalar>(seed: Seed) -> Result<ModelGraph<T>> {
    lenet_topology().build(seed)
}

/// Full-width VGG-16 (about 38M parameters).
pub fn build_vgg16<T: Scalar>(seed: Seed) -> Result<ModelGraph<T>> {
    vgg16_topology(VggScale::STANDARD).build(seed)
}

pub fn build_vgg16_scaled<T: Scalar>(seed: Seed, scale: VggScale) -> Result<ModelGraph<T>> {
    vgg16_topology(scale).build(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lenet_shapes_chain() {
        let t = lenet_topology();
        let shapes = t.shapes().unwrap();
        assert_eq!(shapes[3], vec![6, 14, 14]);
        assert_eq!(shapes[6], vec![16, 5, 5]);
        assert_eq!(shapes.last().unwrap(), &vec![1, 10]);
        // conv 156 + 2416, fc 48120 + 10164 + 850
        assert_eq!(t.param_count(), 61_706);
    }

    #[test]
    fn vgg_layer_counts() {
        let t = vgg16_topology(VggScale::STANDARD);
        assert_eq!(t.count(LayerKind::Conv), 13);
        assert_eq!(t.count(LayerKind::MaxPool), 5);
        assert_eq!(t.count(LayerKind::Relu), 15);
        assert_eq!(t.count(LayerKind::Fc), 3);
        assert_eq!(t.count(LayerKind::Softmax), 1);
        let shapes = t.shapes().unwrap();
        assert_eq!(shapes.last().unwrap(), &vec![1, 1000]);
    }

    #[test]
    fn parameter_ratio() {
        let lenet = lenet_topology().param_count();
        let vgg = vgg16_topology(VggScale::STANDARD).param_count();
        assert!(vgg > 100 * lenet, "{vgg} vs {lenet}");
    }

    #[test]
    fn build_is_deterministic() {
        let a: ModelGraph = build_lenet(Seed(1)).unwrap();
        let b: ModelGraph = build_lenet(Seed(1)).unwrap();
        assert_eq!(a, b);
        let c: ModelGraph = build_lenet(Seed(2)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn topology_round_trip() {
        let t = lenet_topology();
        let m: ModelGraph = t.build(Seed(4)).unwrap();
        assert_eq!(m.topology(), t);
    }

    #[test]
    fn small_vgg_builds() {
        let m: ModelGraph = build_vgg16_scaled(Seed(3), VggScale::SMALL).unwrap();
        assert_eq!(m.output_shape(), vec![1, 10]);
        assert_eq!(m.count(LayerKind::Conv), 13);
    }
}
