//! Half-angle BRDF representation, tabulated tables and dictionaries.

pub mod dictionary;
pub mod grid;
pub mod halfdiff;
pub mod merl;
pub mod parametric;
pub mod tabulated;

pub use dictionary::{fit_to_dictionary, BrdfDictionary, DictionaryFit};
pub use grid::{HalfDiffGrid, SampleWeights};
pub use halfdiff::{from_half_diff, to_half_diff, HalfDiff, Vec3};
pub use merl::{decode_merl, encode_merl, load_merl, load_merl_file, MerlRaw};
pub use parametric::{ModelKind, ParametricBrdfSpec, ParametricSweep};
pub use tabulated::{relative_brdf_error, TabulatedBrdf};
