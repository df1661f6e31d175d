//! Context-dependent choice engine.
//!
//! An item's utility depends on what else is offered. This crate stores the
//! pairwise conditional utilities in a [`UtilityMatrix`], predicts and
//! explains preference reversals ([`reversal`]), learns the matrix from
//! observed choices ([`learner`]), flags suspicious choice behaviour
//! ([`detector`]) and responds with warnings or re-composed choice sets
//! ([`intervention`]). [`sim`] generates synthetic choosers for evaluation
//! and [`service`] exposes sessions over HTTP.

pub mod cli;
pub mod detector;
pub mod error;
pub mod fixtures;
pub mod intervention;
pub mod learner;
pub mod model;
pub mod reversal;
pub mod service;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    full_method_utility, parse_ids, AdditiveGains, Catalog, ChoiceSpace, GainOracle, ItemId,
    MatrixFile, UtilityMatrix, UtilityTable,
};
