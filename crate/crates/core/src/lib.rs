//! Generalized ridge-lasso regression.
//!
//! Estimators minimize `||y - Xb||^2 + lambda2 b'Qb + lambda1 sum_j w_j |b_j|`
//! for a positive semi-definite `Q` (identity, correlation-based, weighted
//! fusion, smooth-lasso or user supplied) and optional adaptive weights `w`.

pub mod data;
pub mod error;
pub mod penalty;
pub mod solver;
pub mod theory;
pub mod sim;
pub mod tuning;

pub use data::{ols_fit, standardize, CoefficientVector, Dataset, StandardizedDesign};
pub use error::{GrilError, Result};
pub use penalty::{PenaltyKind, PenaltyMatrix, PenaltySpec};
pub use solver::{
    adagril_fit, augment, coordinate_descent_solve, gril_fit, kkt_check, lars_lasso_path,
    make_weights, AugmentedProblem, FitReport, PathSolution, WeightScheme, WeightVector,
};
