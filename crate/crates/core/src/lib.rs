pub mod data;
pub mod decomp;
pub mod detect;
pub mod arima;
pub mod checkpoint;
pub mod error;
pub mod experiment;
pub mod forecast;
pub mod graph;
pub mod linalg;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod norm;
pub mod panel;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
