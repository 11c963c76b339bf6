//! Configuration, topology generation, Monte Carlo experiments, sweeps and
//! CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod rgg;
pub mod stats;
pub mod sweep;

pub use config::{parse_schemes, GainSpec, MatrixSpec, SchemeKind, SimConfig, Sweep, SweepParam, TopologySpec};
pub use experiment::{
    build_topology, draw_placement, replay_energy, run_experiment, run_prepared, run_trial, run_with_topology,
    EnergyRecord, ExperimentResult, Prepared, SchemeSummary, TrialOutcome,
};
pub use rgg::{generate_rgg, Placement};
pub use stats::{summarize, Summary};
pub use sweep::{run_sweep, SweepResult, SweepRow};
