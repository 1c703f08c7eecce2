//! Physics-informed collocation solvers for 1-D advection-dominated benchmark
//! problems.
//!
//! The crate covers three families of methods on the same problem set:
//!
//! - iterative collocation training of small per-block networks (PINN and
//!   its domain-decomposed variant DPINN) in [`dpinn`], driven by the
//!   first-order and Levenberg-Marquardt steppers in [`optim`];
//! - single-shot extreme-learning-machine solves in [`elm`], where a frozen
//!   random hidden layer reduces the whole problem to one dense linear system;
//! - classical references in [`problems`]: closed-form solutions, central and
//!   upwind finite differences, and the artificial-diffusion correction that
//!   makes central differencing nodally exact.
//!
//! [`diagnostics`] holds the piecewise-polynomial and exponential-regression
//! probes used to study why the iterative optimizers stall, and [`harness`]
//! provides the JSON-configured experiment runner, parameter sweeps and CSV
//! emission behind the `dpinn-lab` binary.

pub mod activation;
pub mod diagnostics;
pub mod dpinn;
pub mod elm;
pub mod harness;
pub mod net;
pub mod optim;
pub mod problems;

mod error;

pub use error::{Error, Result};
