//! JSON model descriptions with weights in SHVT files.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "input_shape": [1, 8, 8],
//!   "layers": [
//!     {"kind": "conv", "M": 2, "Ch": 1, "R": 3, "U": 1, "H": 8,
//!      "weights": "l0_w.shvt", "bias": "l0_b.shvt"},
//!     {"kind": "relu"},
//!     {"kind": "maxpool", "window": 2, "stride": 2},
//!     {"kind": "fc", "K": 18, "M": 4, "weights": "l3_w.shvt", "bias": "l3_b.shvt"},
//!     {"kind": "softmax"}
//!   ]
//! }
//! ```
//!
//! Weight paths are relative to the JSON file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uvguard_core::layers::{ConvLayer, ConvSpec, FcLayer, FcSpec, LayerDesc, NonlinearKind, PoolSpec};
use uvguard_core::{ModelGraph, Scalar};

use crate::shvt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerRecord {
    Conv {
        #[serde(rename = "M")]
        m: usize,
        #[serde(rename = "Ch")]
        ch: usize,
        #[serde(rename = "R")]
        r: usize,
        #[serde(rename = "U")]
        u: usize,
        #[serde(rename = "H")]
        h: usize,
        weights: PathBuf,
        bias: PathBuf,
    },
    Fc {
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "M")]
        m: usize,
        weights: PathBuf,
        bias: PathBuf,
    },
    Relu,
    Maxpool {
        window: usize,
        stride: usize,
    },
    Softmax,
}

pub fn load<T: Scalar>(path: &Path) -> Result<ModelGraph<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let tensor = |p: &Path| {
        let full = dir.join(p);
        shvt::load::<T>(&full).with_context(|| format!("loading {}", full.display()))
    };
    let mut layers = Vec::with_capacity(file.layers.len());
    for rec in &file.layers {
        let layer = match rec {
            LayerRecord::Conv {
                m,
                ch,
                r,
                u,
                h,
                weights,
                bias,
            } => {
                let spec = ConvSpec::new(*m, *ch, *r, *u, *h)?;
                LayerDesc::Conv(ConvLayer::new(spec, tensor(weights)?, tensor(bias)?.reshape(&[*m])?)?)
            }
            LayerRecord::Fc { k, m, weights, bias } => {
                let spec = FcSpec::new(*k, *m)?;
                let w = tensor(weights)?.reshape(&[*k, *m])?;
                LayerDesc::Fc(FcLayer::new(spec, w, tensor(bias)?.reshape(&[*m])?)?)
            }
            LayerRecord::Relu => LayerDesc::Nonlinear(NonlinearKind::Relu),
            LayerRecord::Maxpool { window, stride } => LayerDesc::Nonlinear(NonlinearKind::MaxPool(PoolSpec {
                window: *window,
                stride: *stride,
            })),
            LayerRecord::Softmax => LayerDesc::Nonlinear(NonlinearKind::Softmax),
        };
        layers.push(layer);
    }
    ModelGraph::new(file.name, &file.input_shape, layers).with_context(|| format!("model {}", path.display()))
}

/// Writes `model.json` plus one SHVT file per weight and bias tensor into `dir`.
pub fn save<T: Scalar>(model: &ModelGraph<T>, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let rec = match layer {
            LayerDesc::Conv(c) => {
                let (w, b) = (PathBuf::from(format!("l{i}_w.shvt")), PathBuf::from(format!("l{i}_b.shvt")));
                shvt::save(&dir.join(&w), &c.weights)?;
                shvt::save(&dir.join(&b), &c.bias)?;
                LayerRecord::Conv {
                    m: c.spec.out_channels,
                    ch: c.spec.in_channels,
                    r: c.spec.kernel,
                    u: c.spec.stride,
                    h: c.spec.input_size,
                    weights: w,
                    bias: b,
                }
            }
            LayerDesc::Fc(f) => {
                let (w, b) = (PathBuf::from(format!("l{i}_w.shvt")), PathBuf::from(format!("l{i}_b.shvt")));
                shvt::save(&dir.join(&w), &f.weights)?;
                shvt::save(&dir.join(&b), &f.bias)?;
                LayerRecord::Fc {
                    k: f.spec.in_features,
                    m: f.spec.out_features,
                    weights: w,
                    bias: b,
                }
            }
            LayerDesc::Nonlinear(NonlinearKind::Relu) => LayerRecord::Relu,
            LayerDesc::Nonlinear(NonlinearKind::MaxPool(p)) => LayerRecord::Maxpool {
                window: p.window,
                stride: p.stride,
            },
            LayerDesc::Nonlinear(NonlinearKind::Softmax) => LayerRecord::Softmax,
        };
        records.push(rec);
    }
    let file = ModelFile {
        name: model.name().to_string(),
        input_shape: model.input_shape().to_vec(),
        layers: records,
    };
    let path = dir.join("model.json");
    fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uvguard_core::layers::build_lenet;
    use uvguard_core::Seed;

    #[test]
    fn lenet_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m: ModelGraph = build_lenet(Seed(3)).unwrap();
        let path = save(&m, dir.path()).unwrap();
        let back: ModelGraph = load(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn parses_documented_record_names() {
        let rec: LayerRecord =
            serde_json::from_str(r#"{"kind":"conv","M":2,"Ch":1,"R":3,"U":1,"H":8,"weights":"w","bias":"b"}"#).unwrap();
        assert!(matches!(rec, LayerRecord::Conv { m: 2, r: 3, .. }));
        let rec: LayerRecord = serde_json::from_str(r#"{"kind":"maxpool","window":2,"stride":2}"#).unwrap();
        assert!(matches!(rec, LayerRecord::Maxpool { window: 2, stride: 2 }));
    }

    #[test]
    fn bad_geometry_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m: ModelGraph = build_lenet(Seed(3)).unwrap();
        let path = save(&m, dir.path()).unwrap();
        let text = fs::read_to_string(&path).unwrap().replacen("\"H\": 32", "\"H\": 31", 1);
        fs::write(&path, text).unwrap();
        assert!(load::<f64>(&path).is_err());
    }
}
