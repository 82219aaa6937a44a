//! Illustrative loop-shaping certificate for the linearized pendulum.
//!
//! None of the weights or the controller here come from a synthesis
//! procedure. They are hand-picked defaults that give a stable loop, so the
//! certificate machinery in [`crate::lti`] can be exercised end to end on the
//! benchmark plant.

use crate::lti::{robustness_margin, series, LtiError, RobustnessCertificate, StateSpace};
use crate::plant::{pendulum_f, pendulum_g, PendulumParams};

/// Linearization of the pendulum about the upright rest point:
/// `ẍ = a·x + b·u` with `a = ∂f/∂x₁(0)` and `b = g(0)`, output `x₁`.
pub fn linearized_pendulum(params: &PendulumParams) -> StateSpace {
    let h = 1e-6;
    let a = (pendulum_f(params, &[h, 0.0]) - pendulum_f(params, &[-h, 0.0])) / (2.0 * h);
    let b = pendulum_g(params, &[0.0, 0.0]);
    StateSpace::siso(&[0.0, 1.0, a, 0.0], &[0.0, b], &[1.0, 0.0], 0.0)
        .expect("2-state realization is consistent")
}

/// Lead controller `kp + kd·s/(τs + 1)`.
pub fn lead_controller(kp: f64, kd: f64, tau: f64) -> StateSpace {
    StateSpace::siso(&[-1.0 / tau], &[1.0], &[-kd / (tau * tau)], kp + kd / tau)
        .expect("1-state realization is consistent")
}

#[derive(Debug, Clone)]
pub struct LoopShapingSetup {
    pub plant: StateSpace,
    pub pre: StateSpace,
    pub post: StateSpace,
    pub controller: StateSpace,
}

impl LoopShapingSetup {
    /// Unit weights and a lead controller `30 + 8s/(0.01s + 1)`.
    pub fn pendulum_default(params: &PendulumParams) -> Self {
        Self {
            plant: linearized_pendulum(params),
            pre: StateSpace::scalar_gain(1.0),
            post: StateSpace::scalar_gain(1.0),
            controller: lead_controller(30.0, 8.0, 0.01),
        }
    }

    /// `P_s = W2 · P · W1`.
    pub fn shaped_plant(&self) -> Result<StateSpace, LtiError> {
        series(&self.post, &self.plant, &self.pre)
    }

    pub fn certificate(&self, tol: f64) -> Result<RobustnessCertificate, LtiError> {
        robustness_margin(&self.shaped_plant()?, &self.controller, tol)
    }
}
