//! Monte Carlo sweeps that compare simulated statistics with their large-`n`
//! limits, plus the plumbing to configure them and judge the results.
//!
//! A sweep produces a [`SweepReport`]: one row per sample size holding named
//! observables (mean, confidence half-width, limit target). Acceptance is a
//! list of [`AcceptanceRule`]s evaluated against the rows; every experiment
//! has default rules, and a config may replace them.

mod config;
mod report;
pub mod stats;
mod sweeps;

pub use config::{ExperimentConfig, ExperimentKind, Replicates};
pub use report::{evaluate_rules, AcceptanceRule, Observable, RuleOutcome, SweepReport, SweepRow};
pub use sweeps::{
    beta_limit_targets, beta_limits, exact_vs_mc, kingman_baseline, fluid_distance, run_experiment,
    segregating_sites_lln, allele_count_sweep, GridSpec, KingmanSettings, FluidDistanceSettings, Reference,
};
