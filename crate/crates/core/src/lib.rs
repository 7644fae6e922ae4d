//! Economic models of conversational search.
//!
//! Three interaction models are covered: the classic query/assess baseline,
//! feedback first (clarifying questions before results) and feedback after
//! (follow-up questions after results). The crate evaluates their gain and
//! cost functions, implements the printed optimal-strategy formulas,
//! checks them against a brute-force constrained-minimisation oracle,
//! audits the comparative-statics claims made about them, and simulates and
//! fits synthetic interaction logs.

// Negated float comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod json;
pub mod model;
pub mod oracle;
pub mod sessions;
pub mod statics;

pub use error::{EconError, Result};
pub use model::{
    cost, gain, gamma_fn, validate, CostParams, EfficiencyParams, GainTarget, ModelKind,
    ParamsFile, Strategy, ValidatedParams,
};
