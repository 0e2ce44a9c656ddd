pub mod calculus;
pub mod charts;
pub mod curvature;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod measures;
pub mod metrics;
pub mod report;

pub use error::{Error, Result};
pub use nalgebra;
