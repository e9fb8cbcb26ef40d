//! walklab: a desk-scale laboratory for random walks on finitely generated
//! groups. Exact normal-form arithmetic and Cayley balls for free groups,
//! free abelian groups and free products; Green functions (solved and
//! sampled), Floyd metrics with rigorous two-sided truncation bounds, Martin
//! kernels, and the experiment drivers built on them.
//!
//! All numeric kernels are generic over [`Scalar`] (`f32` or `f64`);
//! concrete `f64` aliases are exported at the crate root.

pub mod ancona;
pub mod boundary;
pub mod error;
pub mod floyd;
pub mod green;
pub mod group;
pub mod measure;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use group::{CayleyBall, Group, GroupElement, GroupSpec, Syllable, OUTSIDE};

/// Concrete `f64` instantiations of the generic numeric types.
pub type StepMeasure64 = measure::StepMeasure<f64>;
pub type MomentReport64 = measure::MomentReport<f64>;
pub type FloydFunction64 = floyd::FloydFunction<f64>;
pub type FloydDistanceBound64 = floyd::FloydDistanceBound<f64>;
pub type GreenEstimate64 = green::GreenEstimate<f64>;
pub type TreeOracle64 = green::TreeOracle<f64>;
pub type DefectRecord64 = ancona::DefectRecord<f64>;
pub type Envelope64 = ancona::Envelope<f64>;
pub type ExitMeasure64 = boundary::ExitMeasure<f64>;
pub type DriftReport64 = boundary::DriftReport<f64>;
