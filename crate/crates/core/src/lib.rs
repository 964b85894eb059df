//! Weighted least-squares B-spline fitting.
//!
//! * [`spline`]: knot vectors, tensor-product spaces, basis evaluation.
//! * [`decomposition`]: the least-squares fit written as a convex
//!   combination of interpolants on n-point subsets.
//! * [`wls`]: production weighted and thin-plate penalized solvers.
//! * [`hierarchical`]: hierarchical B-splines on dyadic meshes.
//! * [`fitting`]: marker-driven reweighted and adaptive fitting.
//! * [`io`]: file formats.
//! * [`cli`]: the `rwls` command-line tool.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cloud;
pub mod decomposition;
pub mod error;
pub mod fitting;
pub mod hierarchical;
pub mod io;
pub mod param;
pub mod spline;
pub mod testfns;
pub mod wls;

pub use cloud::{Marker, WeightedPointCloud};
pub use decomposition::{
    decompose, irls_solve, weight_limit_solution, Decomposition, IrlsExponent,
};
pub use error::{Error, Result};
pub use fitting::{adaptive_rwls_fit, rwls_fit, AlphaMode, FitConfig, FitReport};
pub use hierarchical::{CellId, HierarchicalSpace, RefineOptions};
pub use spline::{Basis, KnotVector, SplineFunction, SplineSpace};
pub use wls::{solve_penalized_wls, solve_wls, FitMetrics};
