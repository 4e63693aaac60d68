//! Globally stabilizing suboptimal control of polynomial systems.
//!
//! The crate compiles a relaxed Hamilton-Jacobi-Bellman policy iteration into
//! a sequence of sum-of-squares programs, solves them with a bundled
//! interior-point SDP solver, and runs the same iteration model-free from
//! simulated trajectory data.
//!
//! Module map:
//! - [`polyalg`]: sparse polynomials, monomial bases, box integrals.
//! - [`sdp`]: block SDP problem form, text format and the interior-point solver.
//! - [`soscomp`]: SOS program to SDP compilation and Gram certificates.
//! - [`gadp_pi`]: model-based policy iteration and initial-feasibility search.
//! - [`simkit`]: RK4 closed-loop simulation with quadrature channels.
//! - [`adp_online`]: data matrices, rank check and the model-free iteration.

pub mod adp_online;
pub mod gadp_pi;
pub mod polyalg;
pub mod sdp;
pub mod simkit;
pub mod soscomp;

pub use polyalg::{Hyperbox, Monomial, MonomialBasis, Polynomial};
