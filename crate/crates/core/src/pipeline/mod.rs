//! End-to-end pipeline: configuration, solver stages, relighting,
//! depth integration and experiment protocols.

pub mod bench;
pub mod config;
pub mod integrate;
pub mod relight;
pub mod run;

pub use bench::{bench, ExperimentReport, Protocol, TrialRecord};
pub use config::{BenchConfig, DictionarySource, PipelineConfig};
pub use integrate::{integrate_normals, DepthMap};
pub use relight::{relative_image_error, relight};
pub use run::{build_dictionary, ingest, run_normals, run_reflectance, ReflectanceOutput};
