//! Control-variates sweeps, curve rendering, and the command-line front end.

pub mod cli;
mod curves;
mod sweep;

pub use curves::{curve_path, emit_curves, epoch_band, quantity_name};
pub use sweep::{
    differing_fields, run_sweep, value_label, SweepResult, SweepRun, SweepScope, SweepSpec, SWEEP_TRACE_HEADER,
};

/// Default repetition seeds.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
