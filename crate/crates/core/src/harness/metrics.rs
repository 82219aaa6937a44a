use std::fmt;

use super::{ExperimentConfig, HarnessError, SimulationTrace};

/// Fraction of the horizon, counted from the end, used for the steady-state
/// error.
const STEADY_STATE_WINDOW: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// RMS tracking error over the whole run, rad.
    pub rmse: f64,
    /// `100 · max|e|` over the last 20 % of the horizon, relative to the
    /// reference amplitude. `+∞` when unbounded (diverged run, or nonzero
    /// error against a zero reference).
    pub steady_state_error_pct: f64,
    pub max_abs_u: f64,
    pub max_abs_x1: f64,
    pub diverged: bool,
}

impl fmt::Display for Metrics {
    /// One `key = value` line per metric.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rmse = {:.9e}", self.rmse)?;
        writeln!(
            f,
            "steady_state_error_pct = {:.9e}",
            self.steady_state_error_pct
        )?;
        writeln!(f, "max_abs_u = {:.9e}", self.max_abs_u)?;
        writeln!(f, "max_abs_x1 = {:.9e}", self.max_abs_x1)?;
        writeln!(f, "diverged = {}", self.diverged)
    }
}

pub fn compute_metrics(
    trace: &SimulationTrace,
    cfg: &ExperimentConfig,
) -> Result<Metrics, HarnessError> {
    if trace.is_empty() {
        return Err(HarnessError::EmptyTrace);
    }
    let rows = &trace.rows;
    let n = rows.len() as f64;
    let rmse = (rows.iter().map(|r| r.e * r.e).sum::<f64>() / n).sqrt();
    let max_abs_u = rows.iter().map(|r| r.u.abs()).fold(0.0, f64::max);
    let max_abs_x1 = rows.iter().map(|r| r.x1.abs()).fold(0.0, f64::max);
    let diverged = trace.aborted();

    let steady_state_error_pct = if diverged {
        f64::INFINITY
    } else {
        // Window start on the step grid; the half-step slack keeps
        // t = 0.8·duration inside the window despite round-off.
        let start = (1.0 - STEADY_STATE_WINDOW) * cfg.duration - 0.5 * cfg.dt;
        let max_err = rows
            .iter()
            .filter(|r| r.t >= start)
            .map(|r| r.e.abs())
            .fold(0.0, f64::max);
        let amplitude = cfg.reference.amplitude;
        if amplitude > 0.0 {
            100.0 * max_err / amplitude
        } else if max_err == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };

    Ok(Metrics {
        rmse,
        steady_state_error_pct,
        max_abs_u,
        max_abs_x1,
        diverged,
    })
}
