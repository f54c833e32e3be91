//! Classical CHSH experiments where particles may delay their output until
//! the detector shows a target setting.
//!
//! Each emitted pair carries instruction cards (an output bit per detector
//! setting plus a target setting); detectors flip their settings at random
//! between time steps. Because the recorded setting is the one faced at
//! output time, such delays push the CHSH combination in the anti-fraction
//! convention up to S = 3 - (1 - p)^2, above the S <= 2 ceiling that static
//! instruction tables cannot escape.
//!
//! The crate keeps three independent routes to every number so they can be
//! checked against each other:
//!
//! - [`engine`]: seeded, parallel Monte Carlo with per-trial random streams
//!   and strictly local per-side simulation.
//! - [`oracle`]: exact probabilities by enumerating the finite per-trial
//!   sample space, plus brute force over all 65536 instruction tables.
//! - [`stats`]: closed forms for the delayed-output strategy and Wilson
//!   intervals to compare the other two routes.
//!
//! [`cli`] wires these into the `chsh-delay` binary.

pub mod cli;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod stats;
pub mod strategies;

pub use engine::{run_experiment, run_side, run_trial, DetectorProcess, TrialRecord};
pub use model::{
    desired_correlation, Bit, CorrelationKind, DelayPolicy, InstructionCard, PairProgram, Setting,
    SwitchModel, TargetPair,
};
pub use oracle::{
    brute_force_tables, exact_s, exact_tally, parity_obstruction_check, ExactTally,
    TableAssignment,
};
pub use stats::{
    analytic_s, analytic_wrong_probability, anti_fraction, chsh_s, quantum_reference,
    wilson_interval, SReport, TallyTable,
};
pub use strategies::{
    delay_strategy_program, enumerate_static, static_program, StaticTable, Strategy,
};
