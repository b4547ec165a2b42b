//! Model selection for `--model`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Result;
use uvguard_core::layers::{lenet_topology, vgg16_topology, VggScale};
use uvguard_core::{ModelGraph, Scalar, Seed, Topology};

use crate::model_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum VggWidth {
    /// 1/16 channel width, 64-wide classifier, 10 classes
    #[default]
    Small,
    /// The published widths (about 38M parameters)
    Full,
}

impl VggWidth {
    pub fn scale(self) -> VggScale {
        match self {
            VggWidth::Small => VggScale::SMALL,
            VggWidth::Full => VggScale::STANDARD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Lenet,
    Vgg16,
    File(PathBuf),
}

impl FromStr for ModelSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "lenet" => ModelSource::Lenet,
            "vgg16" => ModelSource::Vgg16,
            other => ModelSource::File(PathBuf::from(other)),
        })
    }
}

impl fmt::Display for ModelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSource::Lenet => f.write_str("lenet"),
            ModelSource::Vgg16 => f.write_str("vgg16"),
            ModelSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl ModelSource {
    /// Built-in models get random weights from `seed`; files are loaded as is.
    pub fn build<T: Scalar>(&self, seed: Seed, width: VggWidth) -> Result<ModelGraph<T>> {
        Ok(match self {
            ModelSource::Lenet => lenet_topology().build(seed)?,
            ModelSource::Vgg16 => vgg16_topology(width.scale()).build(seed)?,
            ModelSource::File(p) => model_file::load(p)?,
        })
    }

    /// Geometry only, without materializing weights for built-in models.
    pub fn topology(&self, width: VggWidth) -> Result<Topology> {
        Ok(match self {
            ModelSource::Lenet => lenet_topology(),
            ModelSource::Vgg16 => vgg16_topology(width.scale()),
            ModelSource::File(p) => model_file::load::<f64>(p)?.topology(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names_and_paths() {
        assert_eq!("lenet".parse::<ModelSource>().unwrap(), ModelSource::Lenet);
        assert_eq!("vgg16".parse::<ModelSource>().unwrap(), ModelSource::Vgg16);
        assert_eq!(
            "m/model.json".parse::<ModelSource>().unwrap(),
            ModelSource::File("m/model.json".into())
        );
    }

    #[test]
    fn topology_agrees_with_built_model() {
        let m: ModelGraph = ModelSource::Lenet.build(Seed(1), VggWidth::Small).unwrap();
        assert_eq!(m.topology(), ModelSource::Lenet.topology(VggWidth::Small).unwrap());
    }
}
