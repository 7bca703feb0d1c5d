//! Reaction-network toolkit linking stochastic and deterministic dynamics.
//!
//! The crate builds mass-action Hamiltonians and their Legendre-dual
//! Lagrangians for chemical reaction networks, integrates the deterministic
//! and Hamiltonian dynamics, simulates the scaled jump process and its
//! stationary distributions, detects complex balance, and computes
//! Freidlin-Wentzell quasipotentials exactly in one dimension and
//! variationally in general.

pub use nalgebra;

pub mod balance;
pub mod dynamics;
pub mod hamiltonian;
pub mod network;
pub mod quasipot;
pub mod rng;
pub mod special;
pub mod stochastic;
