//! Responses to detected risk: rendered warnings with a directive for the
//! caller, and re-composed choice sets that keep a protected preference.

mod adapt;
mod warnings;

pub use adapt::{
    adapt_choice_set, AdaptParams, AdaptationPlan, DetectorContext, SafetyReport, DEFAULT_RHO_MAX,
};
pub use warnings::{
    compose_warning, Directive, Evidence, ReversalEvidence, Templates, Warning, WarningInput,
    WarningKind,
};
