//! Variational solver and verification harness for the critical-exponent
//! Dirichlet problem
//!
//! ```text
//! -Δu = λu + u^{2*-1}  in Ω,   u = μ g  on ∂Ω,
//! ```
//!
//! posed through the harmonic lift `u = v + μφ` as a homogeneous problem for
//! `v`. The crate discretizes Ω on a tensor grid, evaluates the energy and its
//! fibering maps, classifies Nehari-manifold membership, finds the N⁺ and N⁻
//! solutions (plus bubble-seeded ones on annular domains) and certifies every
//! computable inequality about them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod error;
pub mod functional;
pub mod grid;
pub mod lift;
pub(crate) mod linalg;
pub mod nehari;
pub(crate) mod power;
pub mod solve;
pub mod verify;

pub use error::{Error, Result};

pub use grid::{build_domain, Domain, DomainSpec, Field, Shape, SpectralData};

pub use functional::{energy, fibering, fibering_t0, gradient, hessian_apply, FiberingProfile, FiberingValues, Params};
pub use lift::{compose_solution, solve_lift, BoundaryData, HarmonicLift};
pub use nehari::{
    barycenter, classify, find_roots, ray_set_membership, reduced_j, NehariClass, NehariKind, RayRoots, RaySet,
};
