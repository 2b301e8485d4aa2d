//! Parameterized-Background Data-Weak state estimation on a discrete H¹ space.
//!
//! A state is estimated as `u* = z* + η*`, with `z*` drawn from a background
//! space built from model snapshots and `η*` from an update space tied to the
//! observation functionals.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod hilbert;
pub mod linalg;
pub mod observation;
pub mod placement;
pub mod reduction;
pub mod synthetic;
pub mod update;

pub use error::{PbdwError, Result};
pub use hilbert::{DiscreteSpace, Field, Norm, Point};
