//! Fixtures shared by the criterion benches.

use std::f64::consts::FRAC_PI_6;

use nethinf_core::{ExperimentConfig, MembershipGrid, Preset, StateSpace};

/// Lightly damped 4-state SISO system: two resonant modes in series.
pub fn resonant_chain() -> StateSpace {
    #[rustfmt::skip]
    let a = [
        0.0, 1.0, 0.0, 0.0,
        -4.0, -0.4, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, -25.0, -1.5,
    ];
    StateSpace::siso(&a, &[0.0, 0.0, 0.0, 25.0], &[4.0, 0.0, 0.0, 0.0], 0.0)
        .expect("consistent realization")
}

/// The default 5×5 pendulum grid.
pub fn pendulum_grid() -> MembershipGrid {
    MembershipGrid::over_box(&[-FRAC_PI_6, -1.0], &[FRAC_PI_6, 1.0], &[5, 5], 1.0)
        .expect("valid box")
}

/// A preset shortened to `seconds`.
pub fn short_run(preset: Preset, seconds: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(preset);
    cfg.duration = seconds;
    cfg
}
