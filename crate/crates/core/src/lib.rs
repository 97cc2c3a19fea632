//! Momentum-space laboratory for renormalizing singular potentials.
//!
//! The leading-order channel is an attractive inverse-square potential plus
//! one contact counterterm per singular partial wave. The counterterm runs
//! log-periodically with the cutoff. An inverse-quartic correction is added
//! in first-order distorted-wave perturbation theory with two S-wave
//! counterterms.
//!
//! All momenta and cutoffs are in units of the reduced mass.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod model;
pub mod nlo;
pub mod renorm;
pub mod solver;

pub use error::{Error, Result};
pub use model::{CountertermSet, ModelParams};
pub use solver::{GridOptions, HalfOffShellK, QuadratureGrid};
