//! Learning conditional utilities from logged selections.
//!
//! Every non-retracted selection becomes a set of strict linear inequalities
//! over the matrix entries; ratings and near-even repeat frequencies add
//! equalities. [`estimate_matrix`] then picks a max-margin point of the
//! feasible region.

mod constraints;
mod estimate;
mod log;

use serde::{Deserialize, Serialize};

pub use constraints::{
    constraints_from_log, constraints_from_observation, frequency_equalities, ingest_rating,
    ConstraintSet, LinearConstraint, Provenance, Relation, Term,
};
pub use estimate::{
    estimate_matrix, predict, EstimateFile, MatrixEstimate, Prediction, Violation,
    VIOLATION_TOLERANCE,
};
pub use log::{ChoiceLog, Observation};

use crate::error::Result;
use crate::model::Catalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Tolerance of frequency-derived equalities.
    pub eps_eq: f64,
    /// Tolerance of rating-derived diagonal equalities.
    pub eps_diag: f64,
    /// Box bound on every entry; also the margin cap.
    pub bounds: f64,
    pub near_tie_band: f64,
    pub min_support: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            eps_eq: 0.05,
            eps_diag: 0.1,
            bounds: 100.0,
            near_tie_band: 0.05,
            min_support: 20,
        }
    }
}

/// Constraints from the whole log, then the max-margin estimate.
pub fn fit_log(
    log: &ChoiceLog,
    catalog: &Catalog,
    config: &LearnerConfig,
) -> Result<MatrixEstimate> {
    let constraints = constraints_from_log(log, catalog, config)?;
    estimate_matrix(&constraints, catalog, config.bounds)
}
