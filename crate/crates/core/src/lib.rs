//! Deterministic subspace identification of discrete-time MIMO LTI systems,
//! with evaluators for non-asymptotic perturbation bounds and for the
//! ill-conditioning of the extended observability matrix.
//!
//! Layering, bottom up: [`linalg`] → [`hankel`], [`lti`], [`spectral`] →
//! [`pipeline`] → [`algorithms`] → [`perturbation`], [`conditioning`].

pub mod algorithms;
pub mod conditioning;
pub mod error;
pub mod hankel;
pub mod linalg;
pub mod lti;
pub mod perturbation;
pub mod pipeline;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::Matrix;
