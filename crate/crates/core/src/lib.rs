//! Tikhonov regularisation with heuristic and semi-heuristic parameter
//! choice rules for linear ill-posed problems whose operator is perturbed by
//! a known amount `η` while the data noise level `δ` is unknown.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod gallery;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod rules;
pub mod theory;

pub use config::{DScaling, ExperimentConfig, ExperimentProblem, RuleConstants};
pub use error::{Error, ErrorCategory, Result};
pub use gallery::{NoisyInstance, PerturbationKind, PerturbationSpec, Scenario, TestProblem};
pub use harness::{Experiment, ExperimentRecord, HeatmapMatrix, RecordStatus};
pub use linalg::{DenseMatrix, ProjectedData, SvdFactorization, Vector};
pub use rules::{AlphaGrid, Compensator, Functional, RuleId, RuleSpec, Selection, SelectionOutcome};
