//! Image formation, virtual exemplars, the exemplar bank and synthetic scenes.

pub mod bank;
pub mod exemplar;
pub mod rig;
pub mod scene;
pub mod stack;

pub use bank::ExemplarBank;
pub use exemplar::{exemplar_row, render_exemplar, render_pixel, shading, ExemplarMatrix};
pub use rig::LightingRig;
pub use scene::{render_scene, smooth_mixture, RenderedScene, SceneGeometry, SceneReflectance, SceneSpec};
pub use stack::{ImageFormat, ImageStack, NormalMap};
