//! Calibration of the Heston model by space mapping: a Monte Carlo Asian put
//! pricer (fine model) is aligned through repeated calibrations of a
//! finite-difference European put pricer (coarse model) with adjoint gradients.

pub mod adjoint;
pub mod calibrate;
pub mod error;
pub mod io;
pub mod market;
pub mod mc;
pub mod pde;
pub mod space_map;

pub use error::{Error, Result};
