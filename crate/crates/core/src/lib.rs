//! Numerical laboratory for tetrahedral polynomial chaoses in independent
//! random variables.
//!
//! The crate is organised bottom-up:
//!
//! - [`distributions`]: univariate laws with exact truncated moments and tails.
//! - [`tensors`]: sparse symmetric coefficient arrays with vanishing diagonals.
//! - [`chaos`]: sums of homogeneous tetrahedral forms, decoupled evaluation and
//!   the kernel decomposition over distinct index tuples.
//! - [`cdp`]: truncated-moment criteria for the convergence decomposition
//!   property, the two counterexample families and the triangular-array
//!   weak law checks.
//! - [`poisson`]: Poisson processes on finite cell spaces, multiple
//!   Wiener–Itô integrals of step kernels, trimming and the Mehler operator.
//! - [`harness`]: exact enumeration oracles, convergence diagnostics,
//!   reports, configs and experiment dispatch.
//!
//! All randomness flows through [`Stream`], a named hierarchical seed that
//! makes every simulation a pure function of `(config, seed)`.

pub mod cdp;
pub mod chaos;
pub mod distributions;
mod error;
mod numeric;
pub mod harness;
pub mod poisson;
mod rng;
pub mod tensors;

pub use error::{Error, Result};
pub use rng::Stream;
