//! Workload-adaptive database knob tuning.
//!
//! Tuning proceeds in time slices. Each slice compresses the workload to a
//! representative query subset, tunes that subset with a random-forest
//! Bayesian optimizer bootstrapped from the shared run history, and verifies
//! the most promising configurations on the full workload.

pub mod compressor;
pub mod config_space;
pub mod context;
pub mod error;
pub mod executor;
pub mod forest;
pub mod history;
pub mod session;
pub mod subset_tuner;
pub mod synthetic;
pub mod trace;
pub mod verifier;
pub mod workload;

pub use error::{Error, Result};
