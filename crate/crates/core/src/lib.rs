//! Checksum-guarded DNN inference under simulated undervolting.
//!
//! The crate is `no_std` + `alloc`. The `parallel` feature pulls in std and
//! rayon and splits convolutions over output channels; results are identical
//! either way.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod abft;
pub mod cost;
pub mod dmr;
pub mod error;
pub mod exec;
pub mod faultsim;
pub mod governor;
pub mod guard;
pub mod layers;
pub mod rng;
pub mod scalar;
pub mod sum;
pub mod tensor;

pub use abft::{AbftConfig, ChecksumVerdict, ToleranceMode, WeightChecksums};
pub use dmr::{DmrConfig, DmrVerdict};
pub use error::{Error, Result};
pub use faultsim::{Calibration, ExecContext, FaultModelParams, OperatingPoint, PowerModel};
pub use layers::{ModelGraph, Topology};
pub use rng::Seed;
pub use scalar::Scalar;
pub use tensor::Tensor;
