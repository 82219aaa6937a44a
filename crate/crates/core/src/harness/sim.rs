use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use super::config::validate;
use super::{compute_metrics, write_trace, ExperimentConfig, HarnessError, Metrics};
use super::{SimulationTrace, TraceRow};
use crate::afhc::{AdaptiveController, ControlError, Estimates};
use crate::fuzzy::{FuzzyApproximator, MembershipGrid};
use crate::netchan::Channel;
use crate::plant::{PlantModel, StateVec};

/// Everything a run produces.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub trace: SimulationTrace,
    pub metrics: Metrics,
    pub controller: AdaptiveController,
    pub sensor_channel: Channel<Vec<f64>>,
    pub actuator_channel: Channel<f64>,
}

impl ExperimentOutcome {
    /// Final `(θ_f, θ_g)`, or `None` when the run used the true model.
    pub fn approximators(&self) -> Option<(&FuzzyApproximator, &FuzzyApproximator)> {
        match self.controller.estimates() {
            Estimates::Fuzzy { f, g } => Some((f, g)),
            Estimates::TrueModel(_) => None,
        }
    }

    /// Writes `trace.csv`, `metrics.txt`, `theta_f.txt`, `theta_g.txt` and
    /// the two channel logs into `dir`, creating it if needed.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_trace(&self.trace, &dir.join("trace.csv"))?;

        let metrics_path = dir.join("metrics.txt");
        let mut text = self.metrics.to_string();
        if let Some(reason) = &self.trace.abort_reason {
            text.push_str(&format!("abort_reason = {reason}\n"));
        }
        fs::write(&metrics_path, text).map_err(|e| HarnessError::io(&metrics_path, e))?;

        if let Some((f, g)) = self.approximators() {
            for (name, approx) in [("theta_f", f), ("theta_g", g)] {
                let path = dir.join(format!("{name}.txt"));
                let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                approx
                    .write_theta(BufWriter::new(file), name)
                    .map_err(|e| HarnessError::io(&path, e))?;
            }
        }

        let path = dir.join("sensor_channel.csv");
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        self.sensor_channel
            .write_log(BufWriter::new(file))
            .map_err(|e| HarnessError::io(&path, e))?;
        let path = dir.join("actuator_channel.csv");
        let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        self.actuator_channel
            .write_log(BufWriter::new(file))
            .map_err(|e| HarnessError::io(&path, e))?;
        Ok(())
    }
}

fn setup(msg: impl ToString) -> HarnessError {
    HarnessError::Setup(msg.to_string())
}

/// Simulates the closed loop for `cfg.duration` seconds.
///
/// Per step: sample the state through the sensor channel, form the tracking
/// error, filter it, evaluate `f̂`/`ĝ` and the control law, send the command
/// through the actuator channel, integrate the plant with the delivered
/// command, then adapt. A dynamics overflow or a singular control truncates
/// the trace and marks the run diverged.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    validate(cfg, &|_| 0)?;
    let dt = cfg.dt;
    let plant = PlantModel::pendulum(cfg.plant, cfg.disturbance.d0, cfg.disturbance.omega_d);
    let order = plant.order();

    let estimates = if cfg.ideal_model {
        Estimates::TrueModel(plant.clone())
    } else {
        let fz = &cfg.fuzzy;
        let grid =
            MembershipGrid::over_box(&fz.lo, &fz.hi, &fz.counts, fz.width_scale).map_err(setup)?;
        Estimates::Fuzzy {
            f: FuzzyApproximator::constant(grid.clone(), fz.theta_f_init),
            g: FuzzyApproximator::constant(grid, fz.theta_g_init),
        }
    };
    let mut controller =
        AdaptiveController::new(cfg.controller.clone(), estimates).map_err(setup)?;

    let mut x = StateVec::new(cfg.initial_state.clone()).map_err(setup)?;
    let mut sensor =
        Channel::new(cfg.sensor_channel.clone(), dt, x.as_slice().to_vec()).map_err(setup)?;
    let mut actuator = Channel::scalar(cfg.actuator_channel.clone(), dt).map_err(setup)?;

    let steps = cfg.steps();
    let mut trace = SimulationTrace {
        rows: Vec::with_capacity(steps),
        abort_reason: None,
    };

    for k in 0..steps {
        let t = k as f64 * dt;

        let drop_sensor = if sensor.is_sample_instant(t) {
            sensor
                .push(t, x.as_slice().to_vec())
                .map_err(setup)?
                .dropped
        } else {
            false
        };
        let measured = sensor.output(t).clone();

        let reference = cfg.reference.derivatives(t, order);
        let step = match controller.control(&measured, &reference) {
            Ok(s) => s,
            Err(e @ ControlError::SingularControl { .. }) => {
                trace.abort_reason = Some(format!("{e} at t = {t}"));
                break;
            }
            Err(e) => return Err(setup(e)),
        };

        let drop_actuator = if actuator.is_sample_instant(t) {
            actuator.push(t, step.signal.u).map_err(setup)?.dropped
        } else {
            false
        };
        let u_applied = *actuator.output(t);

        trace.rows.push(TraceRow {
            t,
            x1: x[0],
            x2: x[1],
            xd: reference[0],
            e: reference[0] - x[0],
            e_filt: step.e_filtered[0],
            u: step.signal.u,
            u_applied,
            f_hat: step.f_hat,
            g_hat: step.g_hat,
            v: step.lyapunov,
            drop_sensor,
            drop_actuator,
        });

        match plant.rk4_step(&x, u_applied, t, dt) {
            Ok(next) => x = next,
            Err(e) => {
                trace.abort_reason = Some(e.to_string());
                break;
            }
        }
        controller.adapt(dt);
    }

    let metrics = if trace.is_empty() {
        // aborted before the first row could be logged
        Metrics {
            rmse: f64::INFINITY,
            steady_state_error_pct: f64::INFINITY,
            max_abs_u: 0.0,
            max_abs_x1: cfg.initial_state[0].abs(),
            diverged: true,
        }
    } else {
        compute_metrics(&trace, cfg)?
    };
    Ok(ExperimentOutcome {
        trace,
        metrics,
        controller,
        sensor_channel: sensor,
        actuator_channel: actuator,
    })
}
