//! Synthetic time-series generators and probes for the inductive biases of
//! patch-based forecasting models.

pub mod error;
pub mod evalkit;
pub mod geoprobe;
pub mod linalg;
pub mod mlplab;
pub mod modelio;
pub mod par;
pub mod regprobe;
pub mod rng;
pub mod series;
pub mod siggen;
pub mod simplab;
pub mod spectral;

pub use error::{Error, Result};
pub use faer::Mat;
pub use par::Exec;
pub use series::Series;
