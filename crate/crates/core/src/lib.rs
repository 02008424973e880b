//! Metastability of reversible Markov chains on finite state spaces.
//!
//! The crate computes quasi-stationary and soft measures, `(κ,λ)`-capacities
//! and spectral gaps exactly, evaluates the closed-form bounds relating them,
//! and checks the resulting exit-time laws by continuous-time Monte Carlo.
//! Two worked models are included: Glauber dynamics of the Curie–Weiss model
//! and a random walk on a "wasp" graph made of glued cubes and squares.
//!
//! Time is continuous with a rate-1 Poisson clock: at each ring the state
//! moves according to the one-step kernel `p`, self-loops included.

// `!(x < y)` is how NaN inputs are rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod capacity;
pub mod chain;
mod error;
pub mod io;
pub mod linalg;
pub mod models;
mod rate;
pub mod simulate;
pub mod soft;
pub mod spectral;

pub use capacity::{solve_capacity, CapacityResult, Flow};
pub use chain::{build_chain, restrict, Restriction, ReversibleChain};
pub use error::{Error, Result};
pub use rate::Rate;
pub use soft::{build_soft_kernel, soft_measure, SoftKernel, SoftQsd};
pub use spectral::{qsd, spectral_gap, QsdData};
