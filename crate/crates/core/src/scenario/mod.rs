//! Network generation, experiment orchestration and reporting.
//!
//! Every trial draws from its own random stream, derived from the configured
//! seed and the trial index only, so results do not depend on how trials are
//! scheduled across threads.

mod config;
mod experiment;
mod mobility;

pub use config::{
    sweep_pf, ChannelConfig, DetectionConfig, FormationSettings, OracleSettings, PfSweep, RequirementConfig,
    ScenarioConfig,
};
pub use experiment::{
    evaluate_network, generate_network, generate_positions, oracle_comparisons, run_experiment, trial_rng,
    write_oracle_csv, Algorithm, Estimate, ExperimentReport, OracleComparison, SummaryRow, TrialMetrics, TrialRecord,
};
pub use mobility::{
    mobility_rng, run_mobility_experiment, MobilityReport, MobilityRun, MobilitySummary, OperationRates,
};
