//! Learned Dirichlet boundary conditions for reduced microscale corrector problems.
//!
//! High-fidelity corrector solves on an enlarged cell provide boundary traces on an
//! inner window; a POD basis of those traces plus a small MLP predicts the trace from
//! the inclusion radii, and the prediction closes the reduced corrector problem used
//! at every macroscale integration point.

pub mod api;
pub mod corrector;
pub mod deepbnd;
pub mod error;
pub mod fem;
pub mod macroscale;
pub mod micro;
pub mod mlp;
pub mod pipeline;
pub mod rb;
pub mod store;

pub use error::{Error, Result};
