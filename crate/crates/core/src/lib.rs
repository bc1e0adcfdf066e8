//! PDE-guided attention: attention matrices evolved in pseudo-time under
//! diffusion, wave, reaction-diffusion and advection-diffusion dynamics.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod bench;
pub mod error;
pub mod grid;
pub mod hybrid;
pub mod metrics;
pub mod model;
pub mod pde;

pub use error::{Error, Result};
