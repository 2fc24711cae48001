//! End-to-end Bayesian dose-response inference for plate-structured
//! high-throughput drug screens: synthetic study generation, control-bias
//! correction, prior fitting, posterior curve sampling, benchmark comparison
//! against a classical sigmoid pipeline, and biomarker discovery via amortized
//! conditional randomization testing.

pub mod count_model;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod opt;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod study_io;
pub mod types;

pub use error::{Error, Result};
