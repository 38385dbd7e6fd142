//! Polynomial chaos expansions: orthogonal bases, coefficient blocks, moments
//! and Galerkin propagation of coefficients through linear dynamics.

mod basis;
mod disturbance;
mod galerkin;
mod poly;
mod vector;

pub use basis::{causality_zero_indices, make_basis, BasisFunction, GermTerm, PceBasis, Tag};
pub use disturbance::{Distribution, DisturbanceModel};
pub use galerkin::{galerkin_closed_loop, galerkin_propagate};
pub use poly::PolyFamily;
pub use vector::{moments, Moments, PceVector};
