//! Indirect adaptive fuzzy tracking controller with an H-infinity auxiliary
//! term.
//!
//! For a chain plant `x⁽ⁿ⁾ = f(x) + g(x)u + d` and reference `x_d`, with
//! tracking error `e = x_d − x₁` and `E = (e, ė, …, e⁽ⁿ⁻¹⁾)`, the
//! certainty-equivalence law is
//!
//! ```text
//! u   = (−f̂(x) + x_d⁽ⁿ⁾ + kᵀE + u_a) / ĝ(x)
//! u_a = BᵀPE / r,           B = (0, …, 0, 1)ᵀ
//! ```
//!
//! where `P` solves `A_cᵀP + PA_c = −Q` for the companion matrix `A_c` of
//! `sⁿ + kₙsⁿ⁻¹ + … + k₁`. The error then obeys
//! `Ė = A_cE + B[(f̂ − f) + (ĝ − g)u − d − u_a]`, and the adaptation
//!
//! ```text
//! θ̇_f = −γ_f (EᵀPB) ξ(x)
//! θ̇_g = −γ_g (EᵀPB) ξ(x) u
//! ```
//!
//! cancels the parameter-error terms in the derivative of
//! `½EᵀPE + |θ_f − θ_f*|²/2γ_f + |θ_g − θ_g*|²/2γ_g`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::fuzzy::FuzzyApproximator;
use crate::lti::is_hurwitz;
use crate::plant::PlantModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("feedback gains {0:?} do not give a Hurwitz companion matrix")]
    NotHurwitz(Vec<f64>),
    #[error("Q must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Lyapunov equation is singular")]
    SingularLyapunov,
    #[error("singular control: |ĝ| = {g_hat} below g_min = {g_min}")]
    SingularControl { g_hat: f64, g_min: f64 },
    #[error("invalid controller parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Feedback gains `(k₁, …, kₙ)` on `(e, …, e⁽ⁿ⁻¹⁾)`.
    pub k: Vec<f64>,
    pub q: DMatrix<f64>,
    /// H-infinity attenuation weight; `+∞` switches the auxiliary term off.
    pub r: f64,
    pub gamma_f: f64,
    pub gamma_g: f64,
    pub g_min: f64,
    pub u_max: f64,
    /// Per-step smoothing coefficient for the tracking error, in (0, 1].
    pub filter_alpha: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            k: vec![1.0, 2.0],
            q: DMatrix::identity(2, 2),
            r: 0.1,
            gamma_f: 50.0,
            gamma_g: 50.0,
            g_min: 0.1,
            u_max: 180.0,
            filter_alpha: 1.0,
        }
    }
}

impl ControllerConfig {
    pub fn order(&self) -> usize {
        self.k.len()
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let n = self.order();
        if n == 0 {
            return Err(ControlError::Dimension("gain vector is empty".into()));
        }
        if self.q.shape() != (n, n) {
            return Err(ControlError::Dimension(format!(
                "Q must be {n}x{n}, got {}x{}",
                self.q.nrows(),
                self.q.ncols()
            )));
        }
        if !is_hurwitz(&companion(&self.k)) {
            return Err(ControlError::NotHurwitz(self.k.clone()));
        }
        check_spd(&self.q)?;
        for (name, value) in [
            ("gamma_f", self.gamma_f),
            ("gamma_g", self.gamma_g),
            ("g_min", self.g_min),
            ("u_max", self.u_max),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ControlError::Parameter { name, value });
            }
        }
        if !(self.r > 0.0) {
            return Err(ControlError::Parameter {
                name: "r",
                value: self.r,
            });
        }
        if !(self.filter_alpha > 0.0 && self.filter_alpha <= 1.0) {
            return Err(ControlError::Parameter {
                name: "filter_alpha",
                value: self.filter_alpha,
            });
        }
        Ok(())
    }

    pub fn companion(&self) -> DMatrix<f64> {
        companion(&self.k)
    }
}

/// Companion matrix with ones on the superdiagonal and last row `−kᵀ`, the
/// error dynamics `Ė = A_cE` of the ideal closed loop.
pub fn companion(k: &[f64]) -> DMatrix<f64> {
    let n = k.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == n {
            -k[j]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    })
}

fn check_spd(q: &DMatrix<f64>) -> Result<(), ControlError> {
    let scale = q.amax().max(1.0);
    if (q - q.transpose()).amax() > 1e-12 * scale {
        return Err(ControlError::NotPositiveDefinite);
    }
    let eig = q.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l > 0.0) {
        Ok(())
    } else {
        Err(ControlError::NotPositiveDefinite)
    }
}

/// Symmetric positive-definite solution of `A_cᵀP + PA_c + Q = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovMatrix {
    p: DMatrix<f64>,
}

impl LyapunovMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Frobenius norm of `AᵀP + PA + Q`.
    pub fn residual(&self, a: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
        (a.transpose() * &self.p + &self.p * a + q).norm()
    }

    /// `EᵀPE`.
    pub fn energy(&self, e: &[f64]) -> f64 {
        let e = DVector::from_column_slice(e);
        (e.transpose() * &self.p * &e)[(0, 0)]
    }

    /// `EᵀPB` with `B` the last unit vector.
    pub fn last_row_dot(&self, e: &[f64]) -> f64 {
        let n = self.p.nrows();
        (0..n).map(|j| self.p[(n - 1, j)] * e[j]).sum()
    }
}

/// Solves `A_cᵀP + PA_c = −Q` as a linear system in the `n(n+1)/2`
/// independent entries of `P`.
pub fn solve_lyapunov(
    a_c: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<LyapunovMatrix, ControlError> {
    let n = a_c.nrows();
    if a_c.ncols() != n || q.shape() != (n, n) {
        return Err(ControlError::Dimension(format!(
            "A_c {}x{} and Q {}x{} must be square and equal",
            a_c.nrows(),
            a_c.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    if !is_hurwitz(a_c) {
        return Err(ControlError::NotHurwitz(Vec::new()));
    }
    check_spd(q)?;

    // Upper-triangle packing: (i, j) with i ≤ j.
    let idx = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    };
    let m = n * (n + 1) / 2;
    let mut lhs = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..n {
        for j in i..n {
            let row = idx(i, j);
            // (AᵀP)_ij = Σ_k A_ki P_kj, (PA)_ij = Σ_k P_ik A_kj
            for k in 0..n {
                lhs[(row, idx(k, j))] += a_c[(k, i)];
                lhs[(row, idx(i, k))] += a_c[(k, j)];
            }
            rhs[row] = -q[(i, j)];
        }
    }
    let sol = lhs.lu().solve(&rhs).ok_or(ControlError::SingularLyapunov)?;
    let p = DMatrix::from_fn(n, n, |i, j| sol[idx(i, j)]);
    Ok(LyapunovMatrix { p })
}

/// Componentwise `(1 − α)·prev + α·raw`.
pub fn filter_error(prev_filtered: &[f64], raw: &[f64], alpha: f64) -> Vec<f64> {
    assert_eq!(
        prev_filtered.len(),
        raw.len(),
        "error vector length mismatch"
    );
    prev_filtered
        .iter()
        .zip(raw)
        .map(|(p, r)| (1.0 - alpha) * p + alpha * r)
        .collect()
}

/// Output of [`control_law`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSignal {
    /// Saturated command.
    pub u: f64,
    /// Command before saturation.
    pub unsaturated: f64,
    /// H-infinity auxiliary term `u_a`.
    pub auxiliary: f64,
}

pub fn auxiliary_term(cfg: &ControllerConfig, p: &LyapunovMatrix, e: &[f64]) -> f64 {
    if cfg.r.is_infinite() {
        0.0
    } else {
        p.last_row_dot(e) / cfg.r
    }
}

/// Certainty-equivalence control with H-infinity auxiliary term, saturated
/// to `±u_max`. `ydn` is the n-th derivative of the reference.
pub fn control_law(
    cfg: &ControllerConfig,
    p: &LyapunovMatrix,
    f_hat: f64,
    g_hat: f64,
    e: &[f64],
    ydn: f64,
) -> Result<ControlSignal, ControlError> {
    // ĝ is a convex combination of projected θ_g, so it can land a few ulps
    // under g_min.
    if !(g_hat.abs() >= cfg.g_min * (1.0 - 1e-9)) {
        return Err(ControlError::SingularControl {
            g_hat,
            g_min: cfg.g_min,
        });
    }
    assert_eq!(
        e.len(),
        cfg.order(),
        "error vector length must equal plant order"
    );
    let feedback: f64 = cfg.k.iter().zip(e).map(|(k, e)| k * e).sum();
    let auxiliary = auxiliary_term(cfg, p, e);
    let unsaturated = (-f_hat + ydn + feedback + auxiliary) / g_hat;
    Ok(ControlSignal {
        u: unsaturated.clamp(-cfg.u_max, cfg.u_max),
        unsaturated,
        auxiliary,
    })
}

/// One explicit-Euler step of the adaptation laws followed by projection of
/// `θ_g` onto `θ_g ≥ g_min`.
#[allow(clippy::too_many_arguments)]
pub fn adapt_step(
    approx_f: &mut FuzzyApproximator,
    approx_g: &mut FuzzyApproximator,
    xi: &[f64],
    e: &[f64],
    p: &LyapunovMatrix,
    u: f64,
    cfg: &ControllerConfig,
    dt: f64,
) {
    assert!(dt > 0.0, "adaptation step must be positive");
    let s = p.last_row_dot(e);
    if s != 0.0 {
        let step_f = -cfg.gamma_f * s * dt;
        for (t, x) in approx_f.theta_mut().iter_mut().zip(xi) {
            *t += step_f * x;
        }
        let step_g = -cfg.gamma_g * s * u * dt;
        for (t, x) in approx_g.theta_mut().iter_mut().zip(xi) {
            *t += step_g * x;
        }
    }
    project_theta_g(approx_g, cfg.g_min);
}

/// Clamps every consequent of `ĝ` to at least `g_min`, which bounds
/// `ĝ(x) ≥ g_min` everywhere.
pub fn project_theta_g(approx_g: &mut FuzzyApproximator, g_min: f64) {
    for t in approx_g.theta_mut() {
        if *t < g_min {
            *t = g_min;
        }
    }
}

/// Where the controller gets `f̂` and `ĝ`.
#[derive(Debug, Clone)]
pub enum Estimates {
    /// Online-adapted fuzzy approximators.
    Fuzzy {
        f: FuzzyApproximator,
        g: FuzzyApproximator,
    },
    /// The true plant functions; adaptation is skipped.
    TrueModel(PlantModel),
}

/// Everything the controller computed at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStep {
    pub e_raw: Vec<f64>,
    pub e_filtered: Vec<f64>,
    pub f_hat: f64,
    pub g_hat: f64,
    pub signal: ControlSignal,
    /// `EᵀPE` on the filtered error.
    pub lyapunov: f64,
}

/// Sequential controller state: filtered error, approximators and the
/// quantities needed by the following adaptation step.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    cfg: ControllerConfig,
    p: LyapunovMatrix,
    estimates: Estimates,
    e_filtered: Option<Vec<f64>>,
    xi: Vec<f64>,
    last_u: f64,
}

impl AdaptiveController {
    pub fn new(cfg: ControllerConfig, estimates: Estimates) -> Result<Self, ControlError> {
        cfg.validate()?;
        let p = solve_lyapunov(&cfg.companion(), &cfg.q)?;
        let xi = match &estimates {
            Estimates::Fuzzy { f, g } => {
                let n = cfg.order();
                for a in [f, g] {
                    if a.grid().input_dim() != n {
                        return Err(ControlError::Dimension(format!(
                            "fuzzy grid has {} inputs, plant order is {n}",
                            a.grid().input_dim()
                        )));
                    }
                }
                if f.grid() != g.grid() {
                    return Err(ControlError::Dimension(
                        "f̂ and ĝ must share one membership grid".into(),
                    ));
                }
                vec![0.0; f.grid().rule_count()]
            }
            Estimates::TrueModel(plant) => {
                if plant.order() != cfg.order() {
                    return Err(ControlError::Dimension(format!(
                        "plant order {} does not match {} gains",
                        plant.order(),
                        cfg.order()
                    )));
                }
                Vec::new()
            }
        };
        let mut ctrl = Self {
            cfg,
            p,
            estimates,
            e_filtered: None,
            xi,
            last_u: 0.0,
        };
        if let Estimates::Fuzzy { g, .. } = &mut ctrl.estimates {
            project_theta_g(g, ctrl.cfg.g_min);
        }
        Ok(ctrl)
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn lyapunov(&self) -> &LyapunovMatrix {
        &self.p
    }

    pub fn estimates(&self) -> &Estimates {
        &self.estimates
    }

    /// Computes the command from the measured state and the reference
    /// derivatives `(x_d, ẋ_d, …, x_d⁽ⁿ⁾)`.
    pub fn control(
        &mut self,
        x: &[f64],
        reference: &[f64],
    ) -> Result<ControllerStep, ControlError> {
        let n = self.cfg.order();
        assert_eq!(x.len(), n, "state length must equal plant order");
        assert_eq!(reference.len(), n + 1, "reference needs n + 1 derivatives");
        let e_raw: Vec<f64> = (0..n).map(|i| reference[i] - x[i]).collect();
        let e_filtered = match &self.e_filtered {
            Some(prev) => filter_error(prev, &e_raw, self.cfg.filter_alpha),
            None => e_raw.clone(),
        };
        let (f_hat, g_hat) = match &self.estimates {
            Estimates::Fuzzy { f, g } => {
                f.grid().regressor_into(x, &mut self.xi);
                (f.evaluate_with(&self.xi), g.evaluate_with(&self.xi))
            }
            Estimates::TrueModel(plant) => (plant.f(x), plant.g(x)),
        };
        let signal = control_law(&self.cfg, &self.p, f_hat, g_hat, &e_filtered, reference[n])?;
        let lyapunov = self.p.energy(&e_filtered);
        self.e_filtered = Some(e_filtered.clone());
        self.last_u = signal.u;
        Ok(ControllerStep {
            e_raw,
            e_filtered,
            f_hat,
            g_hat,
            signal,
            lyapunov,
        })
    }

    /// Advances the adaptation laws using the regressor, filtered error and
    /// command from the latest [`control`](Self::control) call.
    pub fn adapt(&mut self, dt: f64) {
        let Some(e) = &self.e_filtered else { return };
        if let Estimates::Fuzzy { f, g } = &mut self.estimates {
            adapt_step(f, g, &self.xi, e, &self.p, self.last_u, &self.cfg, dt);
        }
    }
}
