//! Data-driven stochastic predictive control for linear time-invariant systems
//! with additive disturbances, built on polynomial chaos expansions over
//! Hankel-matrix system representations.

use openblas_src as _;

pub mod conic;
pub mod controller;
pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod ocp;
pub mod par;
pub mod pce;
pub mod serde_util;
pub mod sets;
pub mod terminal;

pub use error::{Error, Result};
