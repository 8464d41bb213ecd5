//! Finite-difference pricer for the European put under the Heston model in
//! log-price `x = log S`, variance `nu` and time to maturity `tau`.

pub mod convergence;
pub mod grid;
pub mod hv;
pub mod operators;
pub mod surface;
pub mod tridiag;

pub use convergence::{time_refinement_study, RefinementRow};
pub use grid::{build_grid, Grid2D, GridOverrides};
pub use hv::{hv_step, HvWorkspace};
pub use operators::{Direction, HestonOperators, NuMaxBoundary, Part, SplitOperator};
pub use surface::{
    price_surface, readout_weights, smooth_payoff, PdeOptions, PdeProblem, PriceSurface, Readout,
};
