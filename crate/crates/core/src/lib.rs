//! Simulation and analysis of pulsed-heating ODMR thermometry with NV centers
//! in nanodiamonds.
//!
//! The physics kernels ([`thermal`], [`nvspin`]) are generic over the float
//! type; the aliases below fix it to `f32` or `f64`. Simulation drivers and
//! fitters work in `f64`.

pub mod analysis;
pub mod magnet;
pub mod nvspin;
pub mod pulseprog;
pub mod scalar;
pub mod thermal;

pub use scalar::Scalar;

pub type ThermalModel32 = thermal::ThermalModel<f32>;
pub type ThermalModel64 = thermal::ThermalModel<f64>;
pub type NvEnsemble32 = nvspin::NvEnsemble<f32>;
pub type NvEnsemble64 = nvspin::NvEnsemble<f64>;
pub type DtRelation32 = nvspin::DtRelation<f32>;
pub type DtRelation64 = nvspin::DtRelation<f64>;
