//! Direct integration of the forward Kolmogorov system and empirical
//! validation of certificates.
//!
//! The solver is an adaptive Dormand–Prince 5(4) pair with cubic
//! Hermite dense output. Probability vectors are renormalized only when
//! the drift exceeds 1e−12; every correction is logged on the
//! trajectory.

use nalgebra::{DMatrix, DVector};

use crate::bound::{BoundCertificate, Method, RateSpec};
use crate::error::{Error, Result};
use crate::matrices::{build_a, transform_t, MatrixFn};
use crate::model::ChainModel;

/// An accepted-step trajectory of `p' = A(t) p`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Right-hand sides at the accepted nodes (for dense output).
    derivs: Vec<DVector<f64>>,
    pub solver_tolerance: f64,
    /// (time, drift) pairs where mass or positivity was corrected.
    pub renormalizations: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("nonempty trajectory")
    }

    /// Cubic Hermite interpolation at `t` within the covered range.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let n = self.times.len();
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let i = match self
            .times
            .binary_search_by(|x| x.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => return self.states[i].clone(),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let h = self.times[i + 1] - self.times[i];
        let s = (t - self.times[i]) / h;
        let (p0, p1) = (&self.states[i], &self.states[i + 1]);
        let (d0, d1) = (&self.derivs[i], &self.derivs[i + 1]);
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        p0 * h00 + d0 * (h10 * h) + p1 * h01 + d1 * (h11 * h)
    }
}

/// Integrates `p' = A(t) p` over `[t0, t1]` with local error `tol`.
pub fn solve_kolmogorov(
    model: &ChainModel,
    p0: &[f64],
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Trajectory> {
    let a = build_a(model)?;
    solve_linear(&a, p0, t0, t1, tol, true)
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 1.0 / 5.0;
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// DP5(4) on `y' = M(t) y`; `renormalize` enforces the probability
/// invariants after accepted steps.
pub fn solve_linear(
    m: &MatrixFn,
    y0: &[f64],
    t0: f64,
    t1: f64,
    tol: f64,
    renormalize: bool,
) -> Result<Trajectory> {
    assert!(t1 > t0);
    assert!(tol > 0.0);
    let dim = m.dim();
    assert_eq!(y0.len(), dim);
    let mut y = DVector::from_column_slice(y0);
    let mut t = t0;
    let mut k: Vec<DVector<f64>> = (0..7).map(|_| DVector::zeros(dim)).collect();
    let mut stage = DVector::zeros(dim);
    m.matvec(t, &y, &mut k[0]);

    // initial step from the coarse intensity scale
    let scale: f64 = m
        .terms()
        .iter()
        .map(|(_, a)| a.amax())
        .fold(0.0, f64::max)
        .max(1.0);
    let mut h = (0.1 / scale).min((t1 - t0) / 10.0).max(1e-10);

    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut derivs = vec![k[0].clone()];
    let mut renorms = Vec::new();

    let max_steps = 50_000_000usize;
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > max_steps {
            return Err(Error::Numeric(format!(
                "step budget exhausted at t = {t}"
            )));
        }
        if h < 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        if t + h > t1 {
            h = t1 - t;
        }

        // stages (k[0] is fresh from the previous step: FSAL)
        stage.copy_from(&y);
        stage.axpy(h * A21, &k[0], 1.0);
        m.matvec(t + C[1] * h, &stage, &mut k[1]);

        stage.copy_from(&y);
        stage.axpy(h * A3[0], &k[0], 1.0);
        stage.axpy(h * A3[1], &k[1], 1.0);
        m.matvec(t + C[2] * h, &stage, &mut k[2]);

        stage.copy_from(&y);
        for (j, &c) in A4.iter().enumerate() {
            stage.axpy(h * c, &k[j], 1.0);
        }
        m.matvec(t + C[3] * h, &stage, &mut k[3]);

        stage.copy_from(&y);
        for (j, &c) in A5.iter().enumerate() {
            stage.axpy(h * c, &k[j], 1.0);
        }
        m.matvec(t + C[4] * h, &stage, &mut k[4]);

        stage.copy_from(&y);
        for (j, &c) in A6.iter().enumerate() {
            stage.axpy(h * c, &k[j], 1.0);
        }
        m.matvec(t + C[5] * h, &stage, &mut k[5]);

        // 5th-order solution
        stage.copy_from(&y);
        for (j, &c) in B5.iter().enumerate() {
            if c != 0.0 {
                stage.axpy(h * c, &k[j], 1.0);
            }
        }
        m.matvec(t + h, &stage, &mut k[6]);

        // embedded error estimate
        let mut err = 0.0_f64;
        for i in 0..dim {
            let mut e4 = 0.0;
            for (j, &c) in B4.iter().enumerate() {
                e4 += c * k[j][i];
            }
            let mut e5 = 0.0;
            for (j, &c) in B5.iter().enumerate() {
                e5 += c * k[j][i];
            }
            let diff = h * (e5 - e4);
            let sc = tol + tol * y[i].abs().max(stage[i].abs());
            err += (diff / sc) * (diff / sc);
        }
        err = (err / dim as f64).sqrt();

        if err <= 1.0 {
            t += h;
            y.copy_from(&stage);
            k.swap(0, 6);
            if renormalize {
                let mut clipped = 0.0_f64;
                for i in 0..dim {
                    if y[i] < 0.0 {
                        clipped = clipped.max(-y[i]);
                        y[i] = 0.0;
                    }
                }
                let mass: f64 = y.iter().sum();
                let drift = (mass - 1.0).abs().max(clipped);
                if drift > 1e-12 {
                    y /= mass;
                    renorms.push((t, drift));
                    m.matvec(t, &y, &mut k[0]);
                }
            }
            times.push(t);
            states.push(y.clone());
            derivs.push(k[0].clone());
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }

    Ok(Trajectory {
        times,
        states,
        derivs,
        solver_tolerance: tol,
        renormalizations: renorms,
    })
}

/// Stiffness fallback: implicit midpoint with a fixed step `h`.
/// A-stable, second order, and it preserves the zero-column-sum mass
/// invariant exactly, so it stays usable when the explicit pair would
/// need prohibitively small steps.
pub fn solve_linear_midpoint(
    m: &MatrixFn,
    y0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
    renormalize: bool,
) -> Result<Trajectory> {
    assert!(t1 > t0);
    assert!(h > 0.0);
    let dim = m.dim();
    assert_eq!(y0.len(), dim);
    let n_steps = (((t1 - t0) / h).ceil() as usize).max(1);
    let h = (t1 - t0) / n_steps as f64;
    let mut y = DVector::from_column_slice(y0);
    let mut deriv = DVector::zeros(dim);
    m.matvec(t0, &y, &mut deriv);

    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut derivs = vec![deriv.clone()];
    let mut renorms = Vec::new();

    for step in 0..n_steps {
        let t = t0 + step as f64 * h;
        let a_mid = m.eval(t + 0.5 * h);
        // (I − h/2 A) y⁺ = (I + h/2 A) y
        let mut lhs = &a_mid * (-0.5 * h);
        let mut rhs_m = a_mid * (0.5 * h);
        for i in 0..dim {
            lhs[(i, i)] += 1.0;
            rhs_m[(i, i)] += 1.0;
        }
        let rhs = &rhs_m * &y;
        y = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric(format!("implicit midpoint solve failed at t = {t}")))?;
        let t_next = t0 + (step + 1) as f64 * h;
        if renormalize {
            let mut clipped = 0.0_f64;
            for i in 0..dim {
                if y[i] < 0.0 {
                    clipped = clipped.max(-y[i]);
                    y[i] = 0.0;
                }
            }
            let mass: f64 = y.iter().sum();
            let drift = (mass - 1.0).abs().max(clipped);
            if drift > 1e-12 {
                y /= mass;
                renorms.push((t_next, drift));
            }
        }
        m.matvec(t_next, &y, &mut deriv);
        times.push(t_next);
        states.push(y.clone());
        derivs.push(deriv.clone());
    }

    Ok(Trajectory {
        times,
        states,
        derivs,
        solver_tolerance: h,
        renormalizations: renorms,
    })
}

/// Forward Kolmogorov system via the stiff fixed-step solver.
pub fn solve_kolmogorov_stiff(
    model: &ChainModel,
    p0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Trajectory> {
    let a = build_a(model)?;
    solve_linear_midpoint(&a, p0, t0, t1, h, true)
}

/// `E[X(t)] = Σ_k k p_k(t)` at the trajectory nodes.
pub fn expected_value(traj: &Trajectory) -> Vec<f64> {
    traj.states
        .iter()
        .map(|p| p.iter().enumerate().map(|(k, &v)| k as f64 * v).sum())
        .collect()
}

pub fn expected_value_at(traj: &Trajectory, t: f64) -> f64 {
    traj.sample(t)
        .iter()
        .enumerate()
        .map(|(k, &v)| k as f64 * v)
        .sum()
}

/// Stationary distribution of a homogeneous model: solves `A p = 0`,
/// `Σ p = 1`.
pub fn stationary_distribution(model: &ChainModel) -> Result<DVector<f64>> {
    if !model.is_homogeneous() {
        return Err(Error::NotApplicable(
            "stationary distributions require constant rates".into(),
        ));
    }
    let a = build_a(model)?.eval(0.0);
    let n = a.nrows();
    let mut sys = DMatrix::zeros(n + 1, n);
    sys.view_mut((0, 0), (n, n)).copy_from(&a);
    for j in 0..n {
        sys[(n, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs[n] = 1.0;
    let svd = sys.svd(true, true);
    let p = svd
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Numeric(format!("stationary solve failed: {e}")))?;
    Ok(p)
}

/// Maps the difference of two distributions into the certificate's
/// norm: `y = (p_a − p_b)[1..S]`, `u = T y`, then the weighted l1/l2 or
/// plain l1 depending on the method.
pub fn certificate_norm(cert: &BoundCertificate, pa: &DVector<f64>, pb: &DVector<f64>) -> f64 {
    let s = pa.len() - 1;
    let (t_mat, _) = transform_t(s);
    let mut y = DVector::zeros(s);
    for i in 0..s {
        y[i] = pa[i + 1] - pb[i + 1];
    }
    let u = &t_mat * y;
    match cert.method {
        Method::DiffIneq => u.iter().map(|v| v.abs()).sum(),
        Method::LogNorm => (0..s)
            .map(|i| (cert.weights.d[i].abs() * u[i]).abs())
            .sum(),
        Method::Lyapunov => {
            // Scaled 2-norm: weighted components can span hundreds of
            // orders of magnitude, so squaring them directly overflows.
            let w: Vec<f64> = (0..s).map(|i| (cert.weights.d[i] * u[i]).abs()).collect();
            let m = w.iter().cloned().fold(0.0_f64, f64::max);
            if m == 0.0 {
                return 0.0;
            }
            m * w.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
        }
    }
}

/// Empirical check of a certificate against two transient solutions.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// (t, observed norm / certified bound) on the output grid.
    pub observed_ratio: Vec<(f64, f64)>,
    pub max_violation: f64,
    pub t_star: Option<f64>,
    pub delta: f64,
    pub passed: bool,
}

/// Solves from both initial distributions and checks
/// `‖w(t)‖ ≤ C·exp(−∫rate)·‖w(s)‖` on `n_out` output points.
/// `slack` is the accepted relative violation (e.g. 1e−6).
pub fn validate_certificate(
    model: &ChainModel,
    cert: &BoundCertificate,
    p0a: &[f64],
    p0b: &[f64],
    horizon: (f64, f64),
    n_out: usize,
    solver_tol: f64,
    slack: f64,
    delta: f64,
) -> Result<ConvergenceReport> {
    let hash = crate::bound::model_hash(model);
    if cert.model_hash != hash {
        return Err(Error::NotApplicable(format!(
            "certificate was issued for model {} but this model hashes to {}",
            &cert.model_hash[..12.min(cert.model_hash.len())],
            &hash[..12]
        )));
    }
    let (t0, t1) = horizon;
    let ta = solve_kolmogorov(model, p0a, t0, t1, solver_tol)?;
    let tb = solve_kolmogorov(model, p0b, t0, t1, solver_tol)?;
    let s = cert.valid_from.max(t0);
    let w0 = certificate_norm(cert, &ta.sample(s), &tb.sample(s));
    let floor = 1e-9 * w0.max(1e-300);
    let mut observed = Vec::with_capacity(n_out);
    let mut max_violation = 0.0_f64;
    for i in 0..n_out {
        let t = s + (t1 - s) * i as f64 / (n_out - 1) as f64;
        let wt = certificate_norm(cert, &ta.sample(t), &tb.sample(t));
        let bound = cert.envelope(t) * w0;
        let ratio = wt / bound.max(floor);
        observed.push((t, ratio));
        // Violation relative to the initial norm: once the envelope drops
        // below the solver's own error floor, comparing against the bound
        // itself would only measure integration noise.
        let violation = (wt - bound) / w0.max(1e-300);
        max_violation = max_violation.max(violation);
    }
    let t_star = find_tstar(cert, w0, delta).ok();
    Ok(ConvergenceReport {
        observed_ratio: observed,
        max_violation,
        t_star,
        delta,
        passed: max_violation <= slack,
    })
}

/// Certified time after which the envelope (and everything after it)
/// stays at or below `delta`: the smallest `t` with
/// `max_{τ ≥ t} C·exp(−∫ rate)·initial_gap ≤ delta`.
pub fn find_tstar(cert: &BoundCertificate, initial_gap: f64, delta: f64) -> Result<f64> {
    assert!(initial_gap > 0.0 && delta > 0.0);
    let mean = cert.rate.mean();
    if mean <= 0.0 {
        return Err(Error::NotApplicable(
            "the certificate's mean rate is not positive; no finite t* exists".into(),
        ));
    }
    let s = cert.valid_from;
    if let RateSpec::Constant { value } = cert.rate {
        let t = s + (cert.constant * initial_gap / delta).ln().max(0.0) / value;
        return Ok(t);
    }
    let env = |t: f64| cert.envelope(t) * initial_gap;
    // With a 1-periodic rate, env(τ+1) = env(τ)·e^{−mean}, so the
    // supremum over [t, ∞) is attained inside [t, t+1].
    let window = |t: f64| {
        (0..=512)
            .map(|i| env(t + i as f64 / 512.0))
            .fold(0.0_f64, f64::max)
    };
    if window(s) <= delta {
        return Ok(s);
    }
    let mut hi = s + 1.0;
    let mut guard = 0;
    while window(hi) > delta {
        hi += 1.0;
        guard += 1;
        if guard > 1_000_000 {
            return Err(Error::Numeric("t* search did not terminate".into()));
        }
    }
    let mut lo = hi - 1.0;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if window(mid) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Integrates from the point mass at state 0 up to `t* + 1` and returns
/// the slice over `[t*, t*+1]`: the limiting periodic regime up to
/// discrepancy `delta` in the certificate norm.
pub fn limiting_regime(
    model: &ChainModel,
    cert: &BoundCertificate,
    initial_gap: f64,
    delta: f64,
    solver_tol: f64,
) -> Result<(f64, Trajectory)> {
    let t_star = find_tstar(cert, initial_gap, delta)?;
    let n = model.size + 1;
    let mut p0 = vec![0.0; n];
    p0[0] = 1.0;
    let traj = solve_kolmogorov(model, &p0, 0.0, t_star + 1.0, solver_tol)?;
    Ok((t_star, traj))
}
