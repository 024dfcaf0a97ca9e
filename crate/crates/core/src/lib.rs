//! Estimation of a survey-weighted population mean when the outcome is
//! never observed in part of the covariate space.
//!
//! Four estimators are provided: complete-case, g-computation with a
//! saturated or linear outcome model, and a synthesis estimator that fills
//! the positive region from a saturated statistical model and the
//! nonpositive region from external reference distributions. Intervals come
//! from a seeded percentile bootstrap that is reproducible across thread
//! counts.

pub mod cohort;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod reference;
pub mod report;
pub mod resampling;
pub mod rng;
pub mod synthetic;

pub use cohort::{Cohort, ColumnMapping, Gender, Participant};
pub use error::{Error, Result};
pub use estimators::{BoundsResult, FittedOutcomeModel, Method};
pub use reference::ReferenceTable;
pub use report::{AnalysisReport, RunConfig};
pub use resampling::{ResamplePlan, ReplicateSummary};
pub use rng::RandomStream;
