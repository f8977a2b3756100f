pub mod data;
pub mod error;
pub mod fusion;
pub mod heads;
pub mod inference;
pub mod layers;
pub mod math;
pub mod model;
pub mod morphing;
pub mod normalize;
pub mod training;

pub use error::{Error, ErrorCategory, Result};
