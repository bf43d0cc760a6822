//! Markov measures of Hausdorff dimension two for suspension flows over
//! subshifts of finite type, with the fluctuation and ball-mass diagnostics
//! that detect singularity with respect to two-dimensional Hausdorff measure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ballmass;
pub mod cli;
pub mod config;
pub mod error;
pub mod fluctuation;
pub mod markov;
pub mod perron;
pub mod sft;
pub mod solver;
pub mod suspension;

pub use error::{Error, Result};
pub use markov::{validate_markov, MarkovMeasure, PathSampler};
pub use sft::{birkhoff_sum, block_recode, validate_sft, BlockCode, Cycle, LocallyConstantFn, Sft, Symbol, Word};
pub use solver::{bowen_root, level_set_sample, max_markov_measure, solve_dimension_two, SolveOptions, SolveResult};
pub use suspension::{check_dim_two, flow_stats, DimTwoReport, FlowStats};
pub use fluctuation::{
    asip_harness, coboundary_test, green_kubo_covariance, nonsingularity_check, select_nonsingular, CovarianceQ,
    NonsingularityReport, TailEventStats,
};
pub use ballmass::{export_series, mass_lower_bound, singularity_series, stopping_times, DiagnosticSeries, MassBound};
pub use config::{preset, preset_names, Model, ModelConfig};
