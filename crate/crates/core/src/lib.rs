pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
