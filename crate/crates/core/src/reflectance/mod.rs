//! Reflectance recovery given normals.

pub mod abundance;
pub mod lowrank;
pub mod metric;
pub mod prox;
pub mod sparse;

pub use abundance::{reconstruct_brdf, AbundanceMatrix};
pub use lowrank::{
    fit_svbrdf_lowrank, select_beta, select_beta_problem, BetaSelection, LowRankParams, LowRankProblem, SolverTrace,
};
pub use metric::CoefficientMetric;
pub use prox::{soft_threshold, svt, LassoOptions};
pub use sparse::{fit_pixel_sparse, fit_sparse, fit_svbrdf_sparse};
