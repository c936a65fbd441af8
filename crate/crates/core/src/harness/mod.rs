//! Simulation studies, configuration, output, and the exact-check suite.

pub mod config;
pub mod dgp;
pub mod experiments;
pub mod instances;
pub mod oracle_suite;
pub mod results;

pub use config::{CycleSettings, DecaySettings, KeyValues, NwCheckSettings, SutvaSettings, SwitchbackSettings};
pub use dgp::{
    gen_cycle_model, gen_switchback_model, CycleDgpConfig, CycleDraw, Decay, DecayDgpConfig, DecayDraw,
    SwitchbackDgpConfig, SwitchbackDraw,
};
pub use experiments::{
    run_cycle_experiment, run_decay_experiment, run_sutva_experiment, run_switchback_experiment,
};
pub use oracle_suite::{run_oracle_suite, run_oracle_suite_with, CheckOutcome, Mutation, OracleReport, SuiteSizes};
pub use results::{write_csv, BestL, ExperimentOutput, ResultsRow, CSV_HEADER};
