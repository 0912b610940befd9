//! Lattice laboratory for the functional Schrödinger picture of a scalar field
//! in one space dimension.
//!
//! * [`lagrangian`]: parse `F(z, zt, zx)`, Legendre-transform it to `H`.
//! * [`operator`]: compile `H` into a lattice operator acting on wavefunctionals.
//! * [`lattice`]: field grids, wavefunctionals, Gaussian initial data.
//! * [`evolve`]: flat-slice time evolution.
//! * [`surface`]: evolution under pointwise deformations of a spacelike surface.
//! * [`feynman`]: exhaustive path sums and transfer operators.
//! * [`classical`]: extremals, principal function and Hamilton–Jacobi checks.
//! * [`cli`]: TOML-driven batch runs behind the `fieldlab` binary.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod classical;
pub mod cli;
pub mod convergence;
pub mod digest;
pub mod error;
pub mod evolve;
pub mod feynman;
pub mod lagrangian;
pub mod lattice;
pub mod operator;
pub mod par;
pub mod poly;
pub mod surface;

pub use error::{Error, Result};
