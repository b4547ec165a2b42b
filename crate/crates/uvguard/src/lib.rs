//! File formats, the experiment harness and the command-line front end for
//! `uvguard-core`.

pub mod commands;
pub mod config;
pub mod csv_out;
pub mod model_file;
pub mod shvt;
pub mod source;
pub mod suites;
pub mod testset;
