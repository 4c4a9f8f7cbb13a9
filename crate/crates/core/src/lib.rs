//! Cosserat rod dynamics on SE(3) with a tip-velocity boundary observer.

pub mod actuation;
pub mod discretize;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod observer;
pub mod rod;
pub mod se3;

pub use error::{Error, Result};
