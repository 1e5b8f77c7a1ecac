//! Stochastic gradient method for risk-neutral optimal control of a
//! semilinear elliptic PDE with a random diffusion coefficient.
//!
//! The crate is organized bottom-up:
//!
//! - [`rand_field`]: truncated Karhunen–Loève diffusion coefficient and its
//!   uniform ellipticity bounds.
//! - [`mesh`] and [`linalg`]: P1 finite elements on a uniform triangulation
//!   of the unit square, CSR operators and a banded Cholesky solver.
//! - [`pde`]: damped Newton solver for the state equation
//!   `-div(a grad y) + y + y^5 = u` (homogeneous Neumann) and the adjoint
//!   equation, plus a priori bound diagnostics.
//! - [`oracle`]: per-sample objective, stochastic gradient, and sample
//!   average approximations.
//! - [`optimizer`]: the stochastic gradient loop with Robbins–Monro steps,
//!   trajectories, rate and boundedness checks, deterministic baseline.
//! - [`armijo`]: scalar counterexample showing that Armijo backtracking with
//!   single-sample gradients does not converge.
//! - [`cli`]: batch front-end used by the `sgm` binary.

pub mod armijo;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod optimizer;
pub mod oracle;
pub mod pde;
pub mod rand_field;
pub mod rng;

pub use error::{Error, Result};
