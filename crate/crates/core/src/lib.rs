//! Prevalence estimation for sensitive survey items that pairs a direct
//! question with a list experiment (item count technique).
//!
//! The crate provides
//!
//! * the direct, standard difference-in-means and combined estimators with
//!   plug-in standard errors and Wald intervals ([`estimators`]),
//! * two placebo tests of the identifying assumptions, Fisher's method and
//!   cross-study differences ([`placebo`]),
//! * a data-generating process with controlled violations and the Monte Carlo
//!   power, coverage and efficiency experiments built on it ([`simulation`]),
//! * CSV ingestion and report rendering ([`io`]) and the `listcombine` CLI.

// Negated float comparisons are used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod io;
pub mod numeric;
pub mod placebo;
pub mod selftest;
pub mod simulation;

pub use data::{summarize_cells, validate, CellSummary, Dataset, ListDesign, Observation, RawRecord, Respondent};
pub use error::{Error, Result};
pub use estimators::{
    combined_estimate, direct_estimate, standard_list_estimate, variance_reduction, wald_ci, Diagnostic,
    EstimateReport, Method, VarianceForm,
};
pub use numeric::Probability;
pub use placebo::{fisher_combine, placebo_test_one, placebo_test_two, PlaceboReport, PlaceboTest};
pub use simulation::{generate_dataset, identification_oracle, DgpParams, Violation};

/// Version tag carried by every JSON document.
pub const SCHEMA_VERSION: &str = "listcombine/1";
