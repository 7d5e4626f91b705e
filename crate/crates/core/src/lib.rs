//! Causal mediation of vaccine efficacy through an antibody marker.
//!
//! The crate is organised bottom-up:
//!
//! * [`popmodel`]: ground-truth populations and exact cross-world expectations
//! * [`data`]: observed count tables and weighted cell tables
//! * [`identification`]: observed-data formulas for the cross-world quantities
//! * [`bounds`]: non-identifiability constructions and correlation sensitivity
//! * [`designs`]: trial designs with a passive-immunization arm or a second trial
//! * [`estimators`]: named estimators over cell tables
//! * [`trialsim`]: trial simulation, exact expected cells and the bootstrap
//!
//! Numerics are generic over [`scalar::Scalar`] (`f64` or `f32`); the
//! aliases below fix the common `f64` instantiation.

pub mod bounds;
pub mod data;
pub mod designs;
pub mod estimators;
pub mod identification;
pub mod popmodel;
pub mod scalar;
pub mod trialsim;

pub use scalar::Scalar;

pub type BinaryTypeDistribution = popmodel::BinaryTypeDistribution<f64>;
pub type GeneralPopulation = popmodel::GeneralPopulation<f64>;
pub type StratifiedPopulation = popmodel::StratifiedPopulation<f64>;
pub type Population = popmodel::Population<f64>;
pub type PhiTable = popmodel::PhiTable<f64>;
pub type EffectReport = popmodel::EffectReport<f64>;
pub type Estimate = popmodel::Estimate<f64>;
pub type CellTable = data::CellTable<f64>;
pub type CurveTable = designs::CurveTable<f64>;
pub type AssignmentDesign = designs::AssignmentDesign<f64>;
pub type StratifiedConditionalMeans = identification::StratifiedConditionalMeans<f64>;
pub type SensitivityCurve = bounds::SensitivityCurve<f64>;
pub type TrialDesignSpec = trialsim::TrialDesignSpec<f64>;
pub type Estimator = estimators::Estimator<f64>;
