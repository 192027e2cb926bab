//! Numeric building blocks shared by the models, the trainer and the analysis layer.

pub mod fd;
pub mod fit;
pub mod linalg;
pub mod nn;
pub mod rng;

pub use fd::{finite_diff_gradient, finite_diff_gradient_sampled};
pub use fit::{least_squares_line, LineFit};
pub use nn::{cross_entropy_loss, layer_norm, softmax, LN_EPS};
pub use rng::{seeded_rng, RngState};
