//! Fear-by-information-source analytics over weighted survey panels.
//!
//! The pipeline runs bottom-up: [`ingest`] loads or synthesizes panels,
//! [`epi`] reconstructs active infections, [`scores`] turns weighted counts into
//! usage and fear scores per source, [`stats`] runs the hypothesis-test
//! battery, [`causal`] attributes explained variance to demographics and
//! source, and [`cluster`] groups states by their source profiles.

pub mod causal;
pub mod cluster;
pub mod data_model;
pub mod epi;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod scores;
pub mod stats;

pub use data_model::{
    AgeGroup, DemographicCell, EduGroup, FearLevel, FearWeights, Grouping, PerSingleton, Singleton,
    SourceCombo, Stratum,
};
pub use epi::DailySeries;
pub use error::{Error, Result};
pub use ingest::{StateCode, SurveyCell, SurveyPanel};
