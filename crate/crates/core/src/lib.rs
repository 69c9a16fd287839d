//! Classification of short gaze-fixation recordings with random convolutional
//! kernels, a closed-form ridge classifier and sequential feature detachment.
//!
//! The crate is organised along the processing chain:
//!
//! - [`data`]: raw sessions, trials, and their file formats
//! - [`preprocess`]: calibration, sanitization, Butterworth filtering, segmentation
//! - [`rocket`]: random kernel bank and the PPV/max feature transform
//! - [`ridge`]: ridge classifier, normalization and model files
//! - [`detach`]: sequential feature detachment
//! - [`harness`]: splits, metrics, experiments, sweeps and reports
//! - [`synth`]: synthetic cohort generator and spectral audit

pub mod data;
pub mod detach;
pub mod error;
pub mod harness;
pub mod preprocess;
pub mod ridge;
pub mod rocket;
pub mod synth;

pub use error::{Error, Result};
