//! Acceptance suite. Runs every criterion, writes one PASS/FAIL line per
//! criterion to stderr (uncaptured), then fails if any criterion failed.
//!
//! Run with `cargo test -p nethinf-core --test acceptance --release` for
//! speed; the debug build also finishes in well under a minute.

use std::f64::consts::{FRAC_PI_4, PI};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};
use nethinf_core::fuzzy::Gaussian;
use nethinf_core::harness::loopshape::{lead_controller, LoopShapingSetup};
use nethinf_core::harness::{run_experiment, write_trace_to};
use nethinf_core::lti::{robustness_margin, series};
use nethinf_core::{
    Channel, ChannelConfig, ExperimentConfig, FuzzyApproximator, MembershipGrid, PendulumParams,
    PlantModel, Preset, StateSpace, StateVec,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 1, 2: closed-loop tracking

fn c1_tracking_bound() -> Outcome {
    let cfg = ExperimentConfig::preset(Preset::Nominal);
    assert_eq!(cfg.duration, 30.0);
    assert_eq!(cfg.dt, 1e-3);
    let m = run_experiment(&cfg).map_err(|e| e.to_string())?.metrics;
    check(
        !m.diverged && m.steady_state_error_pct < 10.0,
        format!(
            "steady_state_error_pct = {:.4} (< 10)",
            m.steady_state_error_pct
        ),
    )
}

fn c2_networked_stability() -> Outcome {
    let mut cfg = ExperimentConfig::preset(Preset::Networked);
    cfg.duration = 60.0;
    assert_eq!(cfg.actuator_channel.delay, 0.02);
    assert_eq!(cfg.actuator_channel.drop_prob, 0.1);
    assert!(cfg.disturbance.d0 > 0.0);
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let m = out.metrics;
    let max_e = out.trace.rows.iter().map(|r| r.e.abs()).fold(0.0, f64::max);
    let drops = out.actuator_channel.drop_count();
    check(
        !m.diverged
            && out.trace.len() == cfg.steps()
            && m.max_abs_x1 <= FRAC_PI_4
            && max_e.is_finite()
            && max_e <= FRAC_PI_4 + cfg.reference.amplitude
            && drops > 0,
        format!(
            "diverged = {}, max|x1| = {:.4} (<= pi/4), max|e| = {:.4}, ss = {:.3}%, {drops} drops",
            m.diverged, m.max_abs_x1, max_e, m.steady_state_error_pct
        ),
    )
}

// ---------------------------------------------------------------------------
// 3: Lyapunov decrement with the true model

fn lyapunov_run(r: f64) -> Result<(f64, f64, usize), String> {
    let mut cfg = ExperimentConfig::preset(Preset::Nominal);
    cfg.duration = 10.0;
    cfg.ideal_model = true;
    cfg.disturbance.d0 = 0.0;
    cfg.controller.r = r;
    let a = cfg.reference.amplitude;
    let w = cfg.reference.frequency;
    // E(0) = (x_d(0) − x1, ẋ_d(0) − x2) = (0.1, 0)
    cfg.initial_state = vec![-0.1, a * w];
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let rows = &out.trace.rows;
    if rows.len() != cfg.steps() {
        return Err(format!("trace truncated at {} rows", rows.len()));
    }
    let e0 = (rows[0].e, rows[0].x2 - a * w);
    if (e0.0 - 0.1).abs() > 1e-15 || e0.1.abs() > 1e-15 {
        return Err(format!("E(0) = {e0:?}"));
    }
    let worst = rows
        .windows(2)
        .map(|p| p[1].v - p[0].v)
        .fold(f64::NEG_INFINITY, f64::max);
    let violations = rows.windows(2).filter(|p| p[1].v > p[0].v + 1e-8).count();
    Ok((worst, rows[rows.len() - 1].v / rows[0].v, violations))
}

fn c3_lyapunov_decrement() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for r in [0.1, 0.5, f64::INFINITY] {
        let (worst, ratio, violations) = lyapunov_run(r)?;
        ok &= violations == 0 && ratio < 1e-2;
        detail.push(format!(
            "r = {r}: max dV = {worst:.2e}, V(T)/V(0) = {ratio:.1e}"
        ));
    }
    check(ok, detail.join("; "))
}

// ---------------------------------------------------------------------------
// 4: H-infinity norm against a dense frequency grid

/// `C (jωI − A)⁻¹ B + D` by Gaussian elimination with partial pivoting.
fn oracle_response(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    w: f64,
) -> Vec<Vec<Complex64>> {
    let n = a.nrows();
    let m = b.ncols();
    let p = c.nrows();
    // augmented [jωI − A | B]
    let mut aug = vec![vec![Complex64::new(0.0, 0.0); n + m]; n];
    for i in 0..n {
        for j in 0..n {
            aug[i][j] = Complex64::new(-a[(i, j)], if i == j { w } else { 0.0 });
        }
        for j in 0..m {
            aug[i][n + j] = Complex64::new(b[(i, j)], 0.0);
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| aug[x][col].norm().total_cmp(&aug[y][col].norm()))
            .unwrap();
        aug.swap(col, piv);
        let pivot_row = aug[col].clone();
        for (row, entries) in aug.iter_mut().enumerate() {
            if row != col {
                let factor = entries[col] / pivot_row[col];
                for (v, &pv) in entries.iter_mut().zip(&pivot_row).skip(col) {
                    *v -= factor * pv;
                }
            }
        }
    }
    let mut g = vec![vec![Complex64::new(0.0, 0.0); m]; p];
    for i in 0..p {
        for j in 0..m {
            let mut acc = Complex64::new(d[(i, j)], 0.0);
            for k in 0..n {
                acc += c[(i, k)] * aug[k][n + j] / aug[k][k];
            }
            g[i][j] = acc;
        }
    }
    g
}

/// Largest singular value of a p×m matrix with m ≤ 2, via the eigenvalues
/// of the Hermitian m×m Gram matrix.
fn oracle_sigma_max(g: &[Vec<Complex64>]) -> f64 {
    let m = g[0].len();
    let gram =
        |i: usize, j: usize| -> Complex64 { g.iter().map(|row| row[i].conj() * row[j]).sum() };
    match m {
        1 => gram(0, 0).re.sqrt(),
        2 => {
            let (a, d, b) = (gram(0, 0).re, gram(1, 1).re, gram(0, 1));
            let lam = 0.5 * (a + d + ((a - d).powi(2) + 4.0 * b.norm_sqr()).sqrt());
            lam.sqrt()
        }
        _ => unreachable!("oracle handles at most two inputs"),
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Stable system with pole magnitudes in [0.1, 10] and damping ≥ 0.3, hidden
/// behind a random well-conditioned similarity transform.
fn random_stable_system(rng: &mut ChaCha8Rng) -> StateSpace {
    let n = rng.random_range(1..=4usize);
    let m = rng.random_range(1..=2usize);
    let p = rng.random_range(1..=2usize);
    let mut a = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let mag = 10f64.powf(uniform(rng, -1.0, 1.0));
        if i + 1 < n && rng.random::<bool>() {
            let zeta = uniform(rng, 0.3, 0.95);
            let (re, im) = (-zeta * mag, mag * (1.0 - zeta * zeta).sqrt());
            a[(i, i)] = re;
            a[(i + 1, i + 1)] = re;
            a[(i, i + 1)] = im;
            a[(i + 1, i)] = -im;
            i += 2;
        } else {
            a[(i, i)] = -mag;
            i += 1;
        }
    }
    let t = DMatrix::from_fn(
        n,
        n,
        |r, c| if r == c { 1.0 } else { 0.0 } + uniform(rng, -0.3, 0.3),
    );
    let t_inv = t
        .clone()
        .try_inverse()
        .expect("near-identity transform is invertible");
    let a = &t_inv * a * &t;
    let b = DMatrix::from_fn(n, m, |_, _| uniform(rng, -1.0, 1.0));
    let c = DMatrix::from_fn(p, n, |_, _| uniform(rng, -1.0, 1.0));
    let d = if rng.random::<bool>() {
        DMatrix::from_fn(p, m, |_, _| uniform(rng, -0.5, 0.5))
    } else {
        DMatrix::zeros(p, m)
    };
    StateSpace::new(a, b, c, d).unwrap()
}

fn grid_supremum(sys: &StateSpace) -> f64 {
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let points = 100_000;
    let mut best = oracle_sigma_max(&oracle_response(a, b, c, d, 0.0));
    // ω → ∞ limit
    let d_only: Vec<Vec<Complex64>> = (0..d.nrows())
        .map(|i| {
            (0..d.ncols())
                .map(|j| Complex64::new(d[(i, j)], 0.0))
                .collect()
        })
        .collect();
    best = best.max(oracle_sigma_max(&d_only));
    for k in 0..points {
        let w = 10f64.powf(-4.0 + 8.0 * k as f64 / (points - 1) as f64);
        best = best.max(oracle_sigma_max(&oracle_response(a, b, c, d, w)));
    }
    best
}

fn c4_hinf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4A11_F00D);
    let mut worst_rel: f64 = 0.0;
    for idx in 0..50 {
        let sys = random_stable_system(&mut rng);
        if !sys.is_stable() {
            return Err(format!("system {idx} not stable"));
        }
        let norm = sys
            .hinf_norm(1e-10)
            .map_err(|e| format!("system {idx}: {e}"))?;
        let grid = grid_supremum(&sys);
        let rel = (norm - grid).abs() / grid;
        worst_rel = worst_rel.max(rel);
        if rel > 1e-6 {
            return Err(format!(
                "system {idx}: bisection {norm} vs grid {grid} (rel {rel:.2e})"
            ));
        }
    }
    let first_order = StateSpace::siso(&[-1.0], &[1.0], &[1.0], 0.0)
        .unwrap()
        .hinf_norm(1e-12)
        .unwrap();
    let gain = StateSpace::scalar_gain(2.0).hinf_norm(1e-12).unwrap();
    check(
        (first_order - 1.0).abs() <= 1e-9 && gain == 2.0,
        format!("50 systems, worst rel = {worst_rel:.2e}; 1/(s+1) -> {first_order:.12}; gain 2 -> {gain}"),
    )
}

// ---------------------------------------------------------------------------
// 5: series composition and certificate

fn random_system(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize) -> StateSpace {
    StateSpace::new(
        DMatrix::from_fn(n, n, |_, _| uniform(rng, -2.0, 2.0)),
        DMatrix::from_fn(n, m, |_, _| uniform(rng, -1.0, 1.0)),
        DMatrix::from_fn(p, n, |_, _| uniform(rng, -1.0, 1.0)),
        DMatrix::from_fn(p, m, |_, _| uniform(rng, -1.0, 1.0)),
    )
    .unwrap()
}

fn c5_certificate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let post = random_system(&mut rng, 2, 2, 1);
    let mid = random_system(&mut rng, 3, 1, 2);
    let pre = random_system(&mut rng, 1, 2, 2);
    let s = series(&post, &mid, &pre).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = 10f64.powf(uniform(&mut rng, -2.0, 2.0));
        let lhs = s.freq_response(w).map_err(|e| e.to_string())?;
        let rhs = post.freq_response(w).unwrap()
            * mid.freq_response(w).unwrap()
            * pre.freq_response(w).unwrap();
        let err = (&lhs - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale = rhs.iter().map(|z| z.norm()).fold(1.0, f64::max);
        worst = worst.max(err / scale);
    }

    let setup = LoopShapingSetup::pendulum_default(&PendulumParams::default());
    let cert = setup.certificate(1e-10).map_err(|e| e.to_string())?;
    let product = cert.epsilon * cert.norm_tzw;

    // 1/(s − 1) under u = −0.5·y leaves the closed-loop pole at +0.5
    let unstable_plant = StateSpace::siso(&[1.0], &[1.0], &[1.0], 0.0).unwrap();
    let weak = robustness_margin(&unstable_plant, &StateSpace::scalar_gain(0.5), 1e-10)
        .map_err(|e| e.to_string())?;
    let strong = robustness_margin(&unstable_plant, &StateSpace::scalar_gain(2.0), 1e-10)
        .map_err(|e| e.to_string())?;
    let mut weak_lead = setup.clone();
    weak_lead.controller = lead_controller(5.0, 8.0, 0.01);
    let lead = weak_lead.certificate(1e-10).map_err(|e| e.to_string())?;

    check(
        worst <= 1e-9
            && cert.loop_stable
            && (product - 1.0).abs() <= 1e-12
            && !weak.loop_stable
            && weak.epsilon == 0.0
            && strong.loop_stable
            && !lead.loop_stable,
        format!(
            "series worst rel = {worst:.1e}; eps*norm - 1 = {:.1e}; unstable loops flagged = {}",
            product - 1.0,
            !weak.loop_stable && !lead.loop_stable
        ),
    )
}

// ---------------------------------------------------------------------------
// 6: fuzzy least-squares fit

fn c6_fuzzy_fit() -> Outcome {
    let grid = MembershipGrid::over_box(&[-PI], &[PI], &[15], 1.0).map_err(|e| e.to_string())?;
    let m = grid.rule_count();
    if m != 15 {
        return Err(format!("{m} rules"));
    }

    // normal equations Φᵀ Φ θ = Φᵀ y on a training grid
    let train = 2001;
    let mut ata = DMatrix::<f64>::zeros(m, m);
    let mut aty = DVector::<f64>::zeros(m);
    for k in 0..train {
        let x = -PI + 2.0 * PI * k as f64 / (train - 1) as f64;
        let xi = DVector::from_vec(grid.regressor(&[x]));
        ata += &xi * xi.transpose();
        aty += &xi * x.sin();
    }
    let theta = ata
        .cholesky()
        .ok_or("normal matrix not positive definite")?
        .solve(&aty);
    let approx = FuzzyApproximator::new(grid.clone(), theta.as_slice().to_vec())
        .map_err(|e| e.to_string())?;

    let dense = 100_001;
    let sup = (0..dense)
        .map(|k| -PI + 2.0 * PI * k as f64 / (dense - 1) as f64)
        .map(|x| (approx.evaluate(&[x]) - x.sin()).abs())
        .fold(0.0, f64::max);

    // simplex property on a 2-D grid at random points, including far outside
    let grid2 = MembershipGrid::new(vec![
        (0..5)
            .map(|j| Gaussian {
                center: -1.0 + 0.5 * j as f64,
                width: 0.4,
            })
            .collect(),
        (0..4)
            .map(|j| Gaussian {
                center: -2.0 + 1.3 * j as f64,
                width: 0.9,
            })
            .collect(),
    ])
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_sum: f64 = 0.0;
    let mut negative = false;
    for _ in 0..10_000 {
        let x = [
            uniform(&mut rng, -10.0, 10.0),
            uniform(&mut rng, -10.0, 10.0),
        ];
        let xi = grid2.regressor(&x);
        negative |= xi.iter().any(|&v| v < 0.0);
        worst_sum = worst_sum.max((xi.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        sup < 0.05 && worst_sum <= 1e-12 && !negative,
        format!("sup |f_hat - sin| = {sup:.2e} (< 0.05); worst |sum xi - 1| = {worst_sum:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 7: channel

fn c7_channel() -> Outcome {
    let dt = 1e-3;
    for k in [0u64, 1, 7, 20] {
        let cfg = ChannelConfig {
            delay: k as f64 * dt,
            sample_period: dt,
            ..Default::default()
        };
        let mut ch = Channel::scalar(cfg, dt).map_err(|e| e.to_string())?;
        for step in 0..500u64 {
            let t = step as f64 * dt;
            let value = (0.37 * step as f64).sin() + step as f64;
            ch.push(t, value).map_err(|e| e.to_string())?;
            let expected = if step >= k {
                let s = (step - k) as f64;
                (0.37 * s).sin() + s
            } else {
                0.0
            };
            if *ch.output(t) != expected {
                return Err(format!("delay {k} steps: mismatch at step {step}"));
            }
        }
    }

    let drops = |seed: u64, p: f64| -> Vec<bool> {
        let cfg = ChannelConfig {
            drop_prob: p,
            sample_period: dt,
            seed,
            ..Default::default()
        };
        let mut ch = Channel::scalar(cfg, dt).unwrap();
        (0..10_000u64)
            .map(|s| ch.push(s as f64 * dt, s as f64).unwrap().dropped)
            .collect()
    };
    let replay = drops(42, 0.1) == drops(42, 0.1) && drops(7, 0.3) == drops(7, 0.3);
    let distinct = drops(42, 0.1) != drops(43, 0.1);

    let mut rates = Vec::new();
    let mut within = true;
    for (seed, p) in [(1u64, 0.1), (2, 0.2), (3, 0.5)] {
        let n = 10_000.0;
        let count = drops(seed, p).iter().filter(|&&d| d).count() as f64;
        let sigma = (n * p * (1.0 - p)).sqrt();
        within &= (count - n * p).abs() <= 3.0 * sigma;
        rates.push(format!("p={p}: {:.4}", count / n));
    }
    check(
        replay && distinct && within,
        format!(
            "shift exact for k in {{0,1,7,20}}; replay identical = {replay}; rates {}",
            rates.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 8: integrator order

fn c8_rk4_order() -> Outcome {
    let plant = PlantModel::new(1, |x| -x[0], |_| 1.0, |_| 0.0, 1.0);
    let error = |steps: usize| -> f64 {
        let dt = 1.0 / steps as f64;
        let mut x = StateVec::new(vec![1.0]).unwrap();
        for k in 0..steps {
            x = plant.rk4_step(&x, 0.0, k as f64 * dt, dt).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    };
    let mut factors = Vec::new();
    for steps in [10, 20, 40] {
        factors.push(error(steps) / error(2 * steps));
    }
    check(
        factors.iter().all(|f| (14.0..=18.0).contains(f)),
        format!(
            "error-reduction factors {:?}",
            factors
                .iter()
                .map(|f| format!("{f:.3}"))
                .collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9: determinism

fn trace_bytes(cfg: &ExperimentConfig) -> Result<Vec<u8>, String> {
    let out = run_experiment(cfg).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    out.write_outputs(dir.path()).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(dir.path().join("trace.csv")).map_err(|e| e.to_string())?;
    let mut in_memory = Vec::new();
    write_trace_to(&out.trace, &mut in_memory).map_err(|e| e.to_string())?;
    if in_memory != bytes {
        return Err("file and in-memory trace differ".into());
    }
    Ok(bytes)
}

fn c9_determinism() -> Outcome {
    let mut detail = Vec::new();
    for preset in Preset::ALL {
        let mut cfg = ExperimentConfig::preset(preset);
        cfg.set_seed(20_240_601);
        let a = trace_bytes(&cfg)?;
        let b = trace_bytes(&cfg)?;
        if a != b {
            return Err(format!("{} traces differ", preset.name()));
        }
        detail.push(format!("{} {} bytes", preset.name(), a.len()));
    }
    Ok(format!("identical: {}", detail.join(", ")))
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("C1 tracking bound (nominal, 30 s)", c1_tracking_bound),
        ("C2 networked stability (60 s)", c2_networked_stability),
        ("C3 Lyapunov decrement (ideal model)", c3_lyapunov_decrement),
        ("C4 H-infinity norm vs frequency grid", c4_hinf_oracle),
        ("C5 series response and certificate", c5_certificate),
        ("C6 fuzzy least-squares fit and simplex", c6_fuzzy_fit),
        ("C7 channel shift, replay, drop rate", c7_channel),
        ("C8 RK4 order", c8_rk4_order),
        ("C9 deterministic trace.csv", c9_determinism),
    ];

    let mut failed = Vec::new();
    let mut report = String::from("\nacceptance criteria\n");
    for (name, run) in criteria {
        let outcome = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(o) => o,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let line = match &outcome {
            Ok(detail) => format!("PASS  {name}: {detail}\n"),
            Err(detail) => {
                failed.push(name);
                format!("FAIL  {name}: {detail}\n")
            }
        };
        report.push_str(&line);
    }
    // bypass the test harness capture so the table is always visible
    let _ = std::io::stderr().write_all(report.as_bytes());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
