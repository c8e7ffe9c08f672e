//! Mesh-free reduced-order hyperelastic simulation.
//!
//! Pipeline: [`sampling`] places integration points and RKPM kernels,
//! [`basis`] evaluates the corrected kernels, [`modes`] extracts skinning
//! eigenmodes from the weight-space Hessian, and [`simulate`] time-steps the
//! resulting linear-blend-skinning model. [`oracle`] provides the full-order
//! reference used to check all of the above.

pub mod basis;
pub mod discretize;
pub mod elasticity;
pub mod error;
pub mod modes;
pub mod oracle;
pub mod sampling;
pub mod simulate;

pub mod linalg;

pub use error::{Error, Result};
