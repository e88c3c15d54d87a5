//! Manifests, experiment drivers and CSV reports for `sobtrace-core`.

pub mod error;
pub mod experiments;
pub mod manifest;
pub mod report;

pub use error::{HarnessError, Result};
pub use experiments::{RunOptions, Setup};
pub use manifest::{Manifest, Overrides};
pub use report::{Cell, ExperimentReport};
