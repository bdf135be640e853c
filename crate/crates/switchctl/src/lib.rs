//! Switching controls for the 2D heat equation: a convex squared-ℓ¹ penalty
//! drives vector-valued controls toward at most one active component per time
//! interval. The optimality system is regularized with a Moreau–Yosida
//! smoothing of the dual subdifferential and solved by a matrix-free
//! semismooth Newton method inside a γ-continuation loop.

pub mod config;
pub mod geometry;
pub mod homotopy;
pub mod mesh;
pub mod oracle;
pub mod prox;
pub mod runner;
pub mod solver;
pub mod sparse;
pub mod system;
