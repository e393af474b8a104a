//! Per-pixel surface normal estimation.

pub mod gradients;
pub mod map;
pub mod nnls;
pub mod refine;
pub mod search;

pub use gradients::{estimate_gradients, estimate_gradients_from, wrap_azimuth, GradientOptions, GradientPair};
pub use map::{estimate_normal_map, NormalMapEstimate, NormalMapOptions};
pub use nnls::{nnls, nnls_gram, nnls_kkt_residual, nnls_l1, nnls_masked, GramWorkspace, NnlsSolution};
pub use refine::{refine_normal, RefineOptions};
pub use search::{
    fit_at, level_residuals, match_normal_bruteforce, match_normal_c2f, match_normal_c2f_until, NormalEstimate, RefineStatus, SearchOptions,
};
