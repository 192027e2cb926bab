pub mod analysis;
pub mod error;
pub mod math;
pub mod models;
pub mod optim;
pub mod recursion;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
