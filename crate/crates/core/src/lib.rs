//! Laplace approximation of finite-dimensional Bayesian posteriors with
//! non-asymptotic total-variation error bounds.

pub mod bounds;
pub mod constants;
pub mod error;
pub mod fd;
pub mod laplace;
pub mod model;
pub mod oracles;
pub mod perturbed;
pub mod quadrature;
pub mod special;
pub mod tensor;

pub use error::{Error, Result};
