//! Models over sets: permutation-invariant `rho(sum phi(x))` networks,
//! permutation-equivariant layers, the sum-of-powers embedding with its
//! inverse, Beta-Binomial Bayesian Sets scoring, and synthetic set tasks.

pub mod autodiff;
pub mod bayes;
pub mod check;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod powersum;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
