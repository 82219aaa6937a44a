//! Continuous-time LTI systems in state-space form.
//!
//! Everything here is small and dense: the systems of interest (nominal
//! plant, loop-shaping weights, shaped plant and controller) have at most a
//! handful of states, so eigenvalues and singular values come straight from
//! nalgebra's dense decompositions.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Initial lower bound grid for [`StateSpace::hinf_norm`]: log-spaced points
/// over `[GRID_LO, GRID_HI]` rad/s, plus ω = 0.
const GRID_POINTS: usize = 400;
const GRID_LO: f64 = 1e-3;
const GRID_HI: f64 = 1e3;

/// Hamiltonian eigenvalue λ counts as imaginary when
/// `|Re λ| < IMAG_AXIS_TOL * (1 + |λ|)`.
const IMAG_AXIS_TOL: f64 = 1e-8;

const MAX_BISECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frequency at pole: jω = {omega}j is an eigenvalue of A")]
    FrequencyAtPole { omega: f64 },
    #[error("norm undefined for unstable system")]
    Unstable,
    #[error("ill-posed feedback loop: I + D_ps·D_k is singular")]
    IllPosed,
    #[error("H-infinity bisection did not converge; best bracket [{lower}, {upper}]")]
    NonConvergent { lower: f64, upper: f64 },
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
}

/// A realization `ẋ = Ax + Bu`, `y = Cx + Du`.
///
/// Zero states encode a static gain `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(LtiError::Dimension(format!(
                "B has {} rows but A has {n}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "C has {} columns but A has {n}",
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::Dimension(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain with no states.
    pub fn gain(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        Self {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
        }
    }

    pub fn scalar_gain(k: f64) -> Self {
        Self::gain(DMatrix::from_element(1, 1, k))
    }

    pub fn identity(dim: usize) -> Self {
        Self::gain(DMatrix::identity(dim, dim))
    }

    /// Single-input single-output first-order or higher realization from
    /// row-major `A` data and column/row vectors.
    pub fn siso(a: &[f64], b: &[f64], c: &[f64], d: f64) -> Result<Self, LtiError> {
        let n = b.len();
        if a.len() != n * n || c.len() != n {
            return Err(LtiError::Dimension(format!(
                "SISO realization needs {} A entries and {n} C entries",
                n * n
            )));
        }
        Self::new(
            DMatrix::from_row_slice(n, n, a),
            DMatrix::from_column_slice(n, 1, b),
            DMatrix::from_row_slice(1, n, c),
            DMatrix::from_element(1, 1, d),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `α·G`, realized by scaling the output equation.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * alpha,
            d: &self.d * alpha,
        }
    }

    /// Change of state coordinates `x = T·z`. Returns `None` when `T` is
    /// singular.
    pub fn similarity(&self, t: &DMatrix<f64>) -> Option<Self> {
        if t.shape() != self.a.shape() {
            return None;
        }
        let t_inv = t.clone().try_inverse()?;
        Some(Self {
            a: &t_inv * &self.a * t,
            b: &t_inv * &self.b,
            c: &self.c * t,
            d: self.d.clone(),
        })
    }

    /// Eigenvalues of `A`.
    pub fn poles(&self) -> Vec<Complex64> {
        eigenvalues(&self.a)
    }

    /// True iff every eigenvalue of `A` lies in the open left half-plane.
    pub fn is_stable(&self) -> bool {
        is_hurwitz(&self.a)
    }

    /// `C(jωI − A)⁻¹B + D`.
    pub fn freq_response(&self, omega: f64) -> Result<DMatrix<Complex64>, LtiError> {
        let n = self.n_states();
        let d = self.d.map(|v| Complex64::new(v, 0.0));
        if n == 0 {
            return Ok(d);
        }
        let s = Complex64::new(0.0, omega);
        for pole in self.poles() {
            if (pole - s).norm() <= 1e-12 * (1.0 + pole.norm()) {
                return Err(LtiError::FrequencyAtPole { omega });
            }
        }
        let resolvent = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let c = self.c.map(|v| Complex64::new(v, 0.0));
        let x = resolvent
            .lu()
            .solve(&b)
            .ok_or(LtiError::FrequencyAtPole { omega })?;
        let g = c * x + d;
        if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LtiError::FrequencyAtPole { omega });
        }
        Ok(g)
    }

    /// Largest singular value of the frequency response at `omega`.
    pub fn sigma_max(&self, omega: f64) -> Result<f64, LtiError> {
        Ok(max_singular_value(&self.freq_response(omega)?))
    }

    /// H-infinity norm by bounded-real-lemma bisection.
    ///
    /// A level γ above σ̄(D) exceeds the norm iff the associated Hamiltonian
    /// has no eigenvalue on the imaginary axis. The bracket starts from a
    /// log-spaced frequency grid; whenever a level is found to be below the
    /// norm, the response is also evaluated at the crossing frequencies and
    /// their midpoints, which lifts the lower bound much faster than plain
    /// halving. Returns the bracket midpoint once its relative width is
    /// below `2·tol`.
    pub fn hinf_norm(&self, tol: f64) -> Result<f64, LtiError> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(LtiError::BadTolerance(tol));
        }
        if !self.is_stable() {
            return Err(LtiError::Unstable);
        }
        let sigma_d = max_singular_value(&self.d.map(|v| Complex64::new(v, 0.0)));
        if self.n_states() == 0 {
            return Ok(sigma_d);
        }

        let mut lower = sigma_d.max(self.sigma_max(0.0)?);
        let ratio = (GRID_HI / GRID_LO).powf(1.0 / (GRID_POINTS - 1) as f64);
        let mut omega = GRID_LO;
        for _ in 0..GRID_POINTS {
            lower = lower.max(self.sigma_max(omega)?);
            omega *= ratio;
        }

        if lower == 0.0 {
            // Grid saw nothing; either G ≡ 0 or the response is negligible
            // everywhere we looked. Probe a tiny level before bisecting.
            let probe = f64::EPSILON;
            match self.imaginary_crossings(probe) {
                None => return Ok(0.0),
                Some(ws) => lower = lower.max(self.best_response(&ws)?).max(probe),
            }
        }

        let mut upper = 2.0 * lower;
        let mut iters = 0;
        while let Some(ws) = self.imaginary_crossings(upper) {
            lower = lower.max(upper).max(self.best_response(&ws)?);
            upper = 2.0 * lower;
            iters += 1;
            if iters > MAX_BISECTION_ITERS {
                return Err(LtiError::NonConvergent { lower, upper });
            }
        }

        for _ in 0..MAX_BISECTION_ITERS {
            if upper - lower <= 2.0 * tol * lower {
                return Ok(0.5 * (lower + upper));
            }
            let level = 0.5 * (lower + upper);
            match self.imaginary_crossings(level) {
                None => upper = level,
                Some(ws) => {
                    lower = lower.max(level).max(self.best_response(&ws)?);
                    if lower > upper {
                        // Response evaluation beat the certified upper level
                        // by round-off; widen back out.
                        upper = lower * (1.0 + tol);
                    }
                }
            }
        }
        Err(LtiError::NonConvergent { lower, upper })
    }

    /// Frequencies where the Hamiltonian at `level` has imaginary-axis
    /// eigenvalues, sorted ascending, or `None` if there are none.
    fn imaginary_crossings(&self, level: f64) -> Option<Vec<f64>> {
        let h = self.hamiltonian(level)?;
        let mut ws: Vec<f64> = eigenvalues(&h)
            .into_iter()
            .filter(|l| l.re.abs() < IMAG_AXIS_TOL * (1.0 + l.norm()))
            .map(|l| l.im.abs())
            .collect();
        if ws.is_empty() {
            return None;
        }
        ws.sort_by(f64::total_cmp);
        ws.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        Some(ws)
    }

    /// Largest response over the crossing frequencies and the midpoints
    /// between neighbours.
    fn best_response(&self, ws: &[f64]) -> Result<f64, LtiError> {
        let mut best: f64 = 0.0;
        for &w in ws {
            best = best.max(self.sigma_max_or_zero(w));
        }
        for pair in ws.windows(2) {
            best = best.max(self.sigma_max_or_zero(0.5 * (pair[0] + pair[1])));
        }
        Ok(best)
    }

    fn sigma_max_or_zero(&self, omega: f64) -> f64 {
        self.sigma_max(omega).unwrap_or(0.0)
    }

    /// Hamiltonian of the bounded-real test at level γ; `None` if
    /// `γ²I − DᵀD` is singular.
    fn hamiltonian(&self, level: f64) -> Option<DMatrix<f64>> {
        let n = self.n_states();
        let m = self.n_inputs();
        let p = self.n_outputs();
        let g2 = level * level;
        let r = DMatrix::<f64>::identity(m, m) * g2 - self.d.transpose() * &self.d;
        let r_inv = r.try_inverse()?;
        let a_h = &self.a + &self.b * &r_inv * self.d.transpose() * &self.c;
        let top_right = &self.b * &r_inv * self.b.transpose();
        let inner = DMatrix::<f64>::identity(p, p) + &self.d * &r_inv * self.d.transpose();
        let bottom_left = -(self.c.transpose() * inner * &self.c);
        let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&a_h);
        h.view_mut((0, n), (n, n)).copy_from(&top_right);
        h.view_mut((n, 0), (n, n)).copy_from(&bottom_left);
        h.view_mut((n, n), (n, n)).copy_from(&(-a_h.transpose()));
        Some(h)
    }
}

/// Result of [`robustness_margin`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessCertificate {
    /// H-infinity norm of `[I; K](I + P_s K)⁻¹`; `+∞` for an unstable loop.
    pub norm_tzw: f64,
    /// `1 / norm_tzw`; zero for an unstable loop.
    pub epsilon: f64,
    pub loop_stable: bool,
}

impl RobustnessCertificate {
    /// Whether the loop meets `‖T_zw‖∞ ≤ 1/ε'` for the requested margin.
    pub fn satisfies(&self, required_epsilon: f64) -> bool {
        self.loop_stable && required_epsilon <= self.epsilon
    }
}

/// Cascade `first` then `second`: the response is `second(s)·first(s)`.
fn cascade(first: &StateSpace, second: &StateSpace) -> Result<StateSpace, LtiError> {
    if first.n_outputs() != second.n_inputs() {
        return Err(LtiError::Dimension(format!(
            "cannot feed {} outputs into {} inputs",
            first.n_outputs(),
            second.n_inputs()
        )));
    }
    let (n1, n2) = (first.n_states(), second.n_states());
    let n = n1 + n2;
    let m = first.n_inputs();
    let p = second.n_outputs();

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&first.a);
    a.view_mut((n1, 0), (n2, n1))
        .copy_from(&(&second.b * &first.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&second.a);

    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (n1, m)).copy_from(&first.b);
    b.view_mut((n1, 0), (n2, m))
        .copy_from(&(&second.b * &first.d));

    let mut c = DMatrix::zeros(p, n);
    c.view_mut((0, 0), (p, n1))
        .copy_from(&(&second.d * &first.c));
    c.view_mut((0, n1), (p, n2)).copy_from(&second.c);

    let d = &second.d * &first.d;
    StateSpace::new(a, b, c, d)
}

/// Series interconnection `post · mid · pre` (signal flows pre → mid → post),
/// as in the shaped plant `W2·P·W1`.
pub fn series(
    post: &StateSpace,
    mid: &StateSpace,
    pre: &StateSpace,
) -> Result<StateSpace, LtiError> {
    let inner = cascade(pre, mid)?;
    cascade(&inner, post)
}

/// Realization of `T_zw = [I; K](I + P_s K)⁻¹`.
///
/// Negative feedback with the disturbance `w` added at the plant output:
/// `y = P_s u + w`, `u = −K y`, and `z = [y; K y]`.
pub fn closed_loop_tzw(ps: &StateSpace, k: &StateSpace) -> Result<StateSpace, LtiError> {
    let p = ps.n_outputs();
    let m = ps.n_inputs();
    if k.n_inputs() != p || k.n_outputs() != m {
        return Err(LtiError::Dimension(format!(
            "controller must be {m}x{p} for a {p}x{m} plant, got {}x{}",
            k.n_outputs(),
            k.n_inputs()
        )));
    }
    let (n1, n2) = (ps.n_states(), k.n_states());
    let n = n1 + n2;

    let loop_matrix = DMatrix::<f64>::identity(p, p) + &ps.d * &k.d;
    let sv = loop_matrix.clone().svd(false, false).singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    if !(smin > 1e-12 * (1.0 + smax)) {
        return Err(LtiError::IllPosed);
    }
    let s = loop_matrix.try_inverse().ok_or(LtiError::IllPosed)?;

    // y = S·(C1 x1 − D1 C2 x2 + w)
    let mut y_x = DMatrix::zeros(p, n);
    y_x.view_mut((0, 0), (p, n1)).copy_from(&(&s * &ps.c));
    y_x.view_mut((0, n1), (p, n2))
        .copy_from(&(-(&s * &ps.d * &k.c)));
    let y_w = s.clone();

    // Ky = C2 x2 + D2 y
    let mut ky_x = &k.d * &y_x;
    {
        let mut block = ky_x.view_mut((0, n1), (m, n2));
        block += &k.c;
    }
    let ky_w = &k.d * &y_w;

    // ẋ1 = A1 x1 − B1·Ky, ẋ2 = A2 x2 + B2·y
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n1, n1)).copy_from(&ps.a);
    a.view_mut((n1, n1), (n2, n2)).copy_from(&k.a);
    {
        let mut top = a.view_mut((0, 0), (n1, n));
        top -= &ps.b * &ky_x;
    }
    {
        let mut bottom = a.view_mut((n1, 0), (n2, n));
        bottom += &k.b * &y_x;
    }

    let mut b = DMatrix::zeros(n, p);
    b.view_mut((0, 0), (n1, p)).copy_from(&(-(&ps.b * &ky_w)));
    b.view_mut((n1, 0), (n2, p)).copy_from(&(&k.b * &y_w));

    let mut c = DMatrix::zeros(p + m, n);
    c.view_mut((0, 0), (p, n)).copy_from(&y_x);
    c.view_mut((p, 0), (m, n)).copy_from(&ky_x);

    let mut d = DMatrix::zeros(p + m, p);
    d.view_mut((0, 0), (p, p)).copy_from(&y_w);
    d.view_mut((p, 0), (m, p)).copy_from(&ky_w);

    StateSpace::new(a, b, c, d)
}

/// Robustness certificate `‖T_zw‖∞ ≤ 1/ε` for the loop `(P_s, K)`.
///
/// The returned `epsilon` is the largest margin the loop certifies; any
/// smaller requirement is also met. An unstable closed loop yields
/// `loop_stable = false`, an unbounded norm and zero margin.
pub fn robustness_margin(
    ps: &StateSpace,
    k: &StateSpace,
    tol: f64,
) -> Result<RobustnessCertificate, LtiError> {
    let tzw = closed_loop_tzw(ps, k)?;
    if !tzw.is_stable() {
        return Ok(RobustnessCertificate {
            norm_tzw: f64::INFINITY,
            epsilon: 0.0,
            loop_stable: false,
        });
    }
    let norm_tzw = tzw.hinf_norm(tol)?;
    Ok(RobustnessCertificate {
        norm_tzw,
        epsilon: 1.0 / norm_tzw,
        loop_stable: true,
    })
}

/// Eigenvalues of a real square matrix (empty for 0×0).
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

/// Every eigenvalue strictly in the open left half-plane.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    eigenvalues(a).iter().all(|l| l.re < 0.0)
}

pub fn max_singular_value(g: &DMatrix<Complex64>) -> f64 {
    if g.is_empty() {
        return 0.0;
    }
    if g.nrows() == 1 || g.ncols() == 1 {
        return g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    }
    g.clone().svd(false, false).singular_values.max()
}
