//! Asynchronous Jacobi relaxation for sparse linear systems, executed by
//! message-passing agents, with a rejection criterion that lets agents discard
//! neighbor data that cannot have come from a convergent iteration.
//!
//! The crate is split along the lines of the computation:
//!
//! - [`problem`]: the benchmark linear system, its Jacobi splitting, spectral
//!   constants and the row partition across agents.
//! - [`corruption`]: seedable bit-flip and malevolent data-corruption injectors.
//! - [`solver`]: the per-agent state machine (ASJ and ASJ-R), the rejection
//!   threshold, the path-length estimate and the local stopping test.
//! - [`runtime`]: the execution substrate, either a deterministic discrete-event
//!   simulation on a virtual clock or one OS thread per agent on the wall clock.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corruption;
pub mod error;
pub mod problem;
pub mod rng;
pub mod runtime;
pub mod solver;

pub use error::{Error, Result};
