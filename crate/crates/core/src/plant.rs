//! Chain-of-integrators nonlinear plants
//! `ẋ₁ = x₂, …, ẋₙ = f(x) + g(x)·u + d(t)`, `y = x₁`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// State of an order-`n` chain: `x₁` and its first `n − 1` derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec(Vec<f64>);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("state vector must have at least one entry")]
    Empty,
    #[error("state entry {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
}

impl StateVec {
    pub fn new(values: Vec<f64>) -> Result<Self, StateError> {
        if values.is_empty() {
            return Err(StateError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(StateError::NonFinite { index, value });
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "plant order must be at least 1");
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Plant output `y = x₁`.
    pub fn output(&self) -> f64 {
        self.0[0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for StateVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Raised when a derivative evaluation or integration step produces a
/// non-finite value. Aborts the simulation step.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("dynamics overflow at t = {t}")]
pub struct DynamicsOverflow {
    pub t: f64,
}

type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A nonlinear plant in chain-of-integrators form.
#[derive(Clone)]
pub struct PlantModel {
    order: usize,
    f: StateFn,
    g: StateFn,
    disturbance: TimeFn,
    g_floor: f64,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("order", &self.order)
            .field("g_floor", &self.g_floor)
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    /// `g_floor` is the declared lower bound on `|g(x)|` over the operating
    /// region. It is informational; evaluation does not clamp.
    pub fn new<F, G, D>(order: usize, f: F, g: G, disturbance: D, g_floor: f64) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        assert!(order >= 1, "plant order must be at least 1");
        assert!(g_floor > 0.0, "g_floor must be positive");
        Self {
            order,
            f: Arc::new(f),
            g: Arc::new(g),
            disturbance: Arc::new(disturbance),
            g_floor,
        }
    }

    /// Cart-pole pendulum (angle, angular rate) with a sinusoidal
    /// disturbance `d0·sin(ω_d t)`.
    pub fn pendulum(params: PendulumParams, d0: f64, omega_d: f64) -> Self {
        let g_floor = params.g_lower_bound(std::f64::consts::FRAC_PI_6);
        Self::new(
            2,
            move |x| pendulum_f(&params, x),
            move |x| pendulum_g(&params, x),
            move |t| d0 * (omega_d * t).sin(),
            g_floor,
        )
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn g_floor(&self) -> f64 {
        self.g_floor
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    pub fn disturbance(&self, t: f64) -> f64 {
        (self.disturbance)(t)
    }

    /// Same `f`, `g` and `g_floor` with the disturbance switched off.
    pub fn without_disturbance(&self) -> Self {
        Self {
            disturbance: Arc::new(|_| 0.0),
            ..self.clone()
        }
    }

    /// `(x₂, …, xₙ, f(x) + g(x)·u + d(t))`.
    pub fn chain_derivative(
        &self,
        x: &StateVec,
        u_applied: f64,
        t: f64,
    ) -> Result<StateVec, DynamicsOverflow> {
        assert_eq!(x.len(), self.order, "state length must equal plant order");
        let mut dx = vec![0.0; self.order];
        self.derivative_into(x.as_slice(), u_applied, t, &mut dx);
        if dx.iter().all(|v| v.is_finite()) {
            Ok(StateVec(dx))
        } else {
            Err(DynamicsOverflow { t })
        }
    }

    fn derivative_into(&self, x: &[f64], u: f64, t: f64, out: &mut [f64]) {
        let n = self.order;
        out[..n - 1].copy_from_slice(&x[1..]);
        out[n - 1] = self.f(x) + self.g(x) * u + self.disturbance(t);
    }

    /// Classical RK4 step with `u` and the disturbance held at their
    /// step-start values (zero-order hold).
    pub fn rk4_step(
        &self,
        x: &StateVec,
        u_applied: f64,
        t: f64,
        dt: f64,
    ) -> Result<StateVec, DynamicsOverflow> {
        assert!(dt > 0.0, "step size must be positive");
        assert_eq!(x.len(), self.order, "state length must equal plant order");
        let n = self.order;
        let x0 = x.as_slice();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];

        self.derivative_into(x0, u_applied, t, &mut k1);
        for i in 0..n {
            tmp[i] = x0[i] + 0.5 * dt * k1[i];
        }
        self.derivative_into(&tmp, u_applied, t, &mut k2);
        for i in 0..n {
            tmp[i] = x0[i] + 0.5 * dt * k2[i];
        }
        self.derivative_into(&tmp, u_applied, t, &mut k3);
        for i in 0..n {
            tmp[i] = x0[i] + dt * k3[i];
        }
        self.derivative_into(&tmp, u_applied, t, &mut k4);

        let next: Vec<f64> = (0..n)
            .map(|i| x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        if next.iter().all(|v| v.is_finite()) {
            Ok(StateVec(next))
        } else {
            Err(DynamicsOverflow { t })
        }
    }
}

/// Physical parameters of the cart-pole benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams {
    /// kg
    pub cart_mass: f64,
    /// kg
    pub pole_mass: f64,
    /// m
    pub half_length: f64,
    /// m/s²
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.8,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("half_length", self.half_length),
            ("gravity", self.gravity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    fn total_mass(&self) -> f64 {
        self.cart_mass + self.pole_mass
    }

    fn denominator(&self, angle: f64) -> f64 {
        let c = angle.cos();
        self.half_length * (4.0 / 3.0 - self.pole_mass * c * c / self.total_mass())
    }

    /// `min g(x)` over `|x₁| ≤ max_angle` (g decreases with |x₁| there).
    pub fn g_lower_bound(&self, max_angle: f64) -> f64 {
        let a = max_angle.abs().min(std::f64::consts::FRAC_PI_2);
        let v = a.cos() / self.total_mass() / self.denominator(a);
        v.max(f64::MIN_POSITIVE)
    }
}

/// Drift term of the pendulum angular acceleration.
pub fn pendulum_f(p: &PendulumParams, x: &[f64]) -> f64 {
    let (angle, rate) = (x[0], x[1]);
    let (s, c) = angle.sin_cos();
    let num = p.gravity * s - p.pole_mass * p.half_length * rate * rate * c * s / p.total_mass();
    num / p.denominator(angle)
}

/// Input gain of the pendulum angular acceleration.
pub fn pendulum_g(p: &PendulumParams, x: &[f64]) -> f64 {
    let angle = x[0];
    (angle.cos() / p.total_mass()) / p.denominator(angle)
}
