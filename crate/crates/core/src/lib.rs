pub mod align;
pub mod ccm;
pub mod dsp;
pub mod engine;
pub mod error;
pub(crate) mod kernels;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod weights;

pub use error::{Error, Result};
