//! Quadratic-Lyapunov (l2) convergence certificates.
//!
//! For a symmetric (or antisymmetric-off-diagonal) weighted matrix
//! `B**`, the function `V = Σ w_k²` obeys `dV/dt ≤ −2β* V`, giving
//! `‖w(t)‖₂ ≤ exp(−∫β*)·‖w(0)‖₂`. The constant-coefficient
//! birth–death case computes β* by a completing-squares bisection that
//! converges to the smallest eigenvalue of `−B**`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bound::{
    model_hash, BoundCertificate, Method, NormTag, RateSpec, SampledFn, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::matrices::{build_bstar, period_grid, weight_conjugate, WeightVector};
use crate::model::{ChainClass, ChainModel, RateFunction};

/// Witnesses of the completing-squares representation
///
/// ```text
/// w'(−B**)w = β* Σ_{k<S} w_k² + Σ_{k<S} (α_k w_k − (o_k/α_k) w_{k+1})²
///             + (β* + rem) w_S²
/// ```
///
/// with `α_k = √r_k` from the elimination sweep and `φ_{k−1} = r_k − μ_k`
/// the remainders carried from one column to the next. Near the optimum
/// the remainders approach zero (and may round below it); the structural
/// requirement is `r_k = α_k² > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SquaresDecomposition {
    pub beta_star: f64,
    /// φ_0 .. φ_{S−2}.
    pub phis: Vec<f64>,
    /// α_1 .. α_S = √r_1 .. √r_S (α_S² is the terminal margin).
    pub alphas: Vec<f64>,
    /// Bisection trace: (lower, upper) after each step, with the sweep
    /// direction alternating between steps.
    pub direction_log: Vec<(f64, f64)>,
}

/// Symmetrizing weights for a homogeneous birth–death chain:
/// `d_1 = 1`, `d_{k+1} = d_k √(μ_k/λ_k)`.
pub fn symmetrize_bd(model: &ChainModel) -> Result<WeightVector> {
    if model.class != ChainClass::BirthDeath {
        return Err(Error::NotApplicable(
            "symmetrizing weights exist for birth-death chains only".into(),
        ));
    }
    if !model.is_homogeneous() {
        return Err(Error::NotApplicable(
            "symmetrizing weights require time-constant rates".into(),
        ));
    }
    let s = model.size;
    let mut d = vec![1.0_f64; s];
    for k in 1..s {
        let lam = model
            .birth_rate(k)
            .map(|f| f.constant_term())
            .unwrap_or(0.0);
        let mu = model
            .death_rate(k)
            .map(|f| f.constant_term())
            .unwrap_or(0.0);
        if lam <= 0.0 || mu <= 0.0 {
            return Err(Error::NotApplicable(format!(
                "symmetrization needs λ_{k} > 0 and μ_{k} > 0 (got {lam}, {mu})"
            )));
        }
        d[k] = d[k - 1] * (mu / lam).sqrt();
    }
    WeightVector::unsigned(d)
}

fn tridiagonal_coeffs(bss: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = bss.nrows();
    for i in 0..s {
        for j in 0..s {
            if i.abs_diff(j) > 1 && bss[(i, j)].abs() > 1e-12 {
                return Err(Error::NotApplicable(format!(
                    "matrix entry ({i},{j}) = {} breaks tridiagonality",
                    bss[(i, j)]
                )));
            }
        }
        if i + 1 < s && (bss[(i, i + 1)] - bss[(i + 1, i)]).abs() > 1e-9 {
            return Err(Error::NotApplicable(format!(
                "matrix is not symmetric at ({i},{})",
                i + 1
            )));
        }
    }
    let c: Vec<f64> = (0..s).map(|i| -bss[(i, i)]).collect();
    let o: Vec<f64> = (0..s - 1)
        .map(|i| 0.5 * (bss[(i, i + 1)] + bss[(i + 1, i)]))
        .collect();
    Ok((c, o))
}

/// Elimination sweep at trial β. Returns `Some(r)` (all pivots, last may
/// be the terminal margin) when every interior pivot is positive.
fn sweep(c: &[f64], o: &[f64], beta: f64, forward: bool) -> Option<Vec<f64>> {
    let s = c.len();
    let mut r = vec![0.0; s];
    if forward {
        r[0] = c[0] - beta;
        if s > 1 && r[0] <= 0.0 {
            return None;
        }
        for k in 1..s {
            r[k] = c[k] - beta - o[k - 1] * o[k - 1] / r[k - 1];
            if k + 1 < s && r[k] <= 0.0 {
                return None;
            }
        }
    } else {
        r[s - 1] = c[s - 1] - beta;
        if s > 1 && r[s - 1] <= 0.0 {
            return None;
        }
        for k in (0..s - 1).rev() {
            r[k] = c[k] - beta - o[k] * o[k] / r[k + 1];
            if k > 0 && r[k] <= 0.0 {
                return None;
            }
        }
    }
    Some(r)
}

fn feasible(c: &[f64], o: &[f64], beta: f64, forward: bool) -> bool {
    match sweep(c, o, beta, forward) {
        Some(r) => {
            let terminal = if forward { r[c.len() - 1] } else { r[0] };
            terminal >= 0.0
        }
        None => false,
    }
}

/// Completing-squares β* for a constant symmetric tridiagonal `B**`.
/// The bisection alternates the sweep direction between steps and stops
/// at segment width 1e−10; β* equals the smallest eigenvalue of `−B**`.
pub fn beta_star_squares(
    bss: &DMatrix<f64>,
    model: &ChainModel,
) -> Result<SquaresDecomposition> {
    let (c, o) = tridiagonal_coeffs(bss)?;
    let s = c.len();
    if s == 1 {
        return Ok(SquaresDecomposition {
            beta_star: c[0],
            phis: vec![],
            alphas: vec![0.0],
            direction_log: vec![(c[0], c[0])],
        });
    }
    // Bracket: 0 is always feasible for a positive-definite −B**; the
    // Gershgorin bound is always infeasible.
    let mut lo = 0.0_f64;
    if !feasible(&c, &o, lo, true) {
        return Err(Error::Numeric(
            "quadratic form is not positive definite at β = 0".into(),
        ));
    }
    let mut hi = (0..s)
        .map(|i| {
            c[i] + if i > 0 { o[i - 1].abs() } else { 0.0 }
                + if i + 1 < s { o[i].abs() } else { 0.0 }
        })
        .fold(0.0_f64, f64::max)
        + 1.0;
    let mut log = vec![(lo, hi)];
    let mut forward = true;
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if feasible(&c, &o, mid, forward) {
            lo = mid;
        } else {
            hi = mid;
        }
        log.push((lo, hi));
        forward = !forward;
    }
    let beta_star = lo;
    let r = sweep(&c, &o, beta_star, true).ok_or_else(|| {
        Error::Numeric("final sweep lost feasibility at the converged β*".into())
    })?;
    let alphas: Vec<f64> = r.iter().map(|v| v.max(0.0).sqrt()).collect();
    let phis: Vec<f64> = (0..s - 1)
        .map(|k| {
            let mu = model
                .death_rate(k + 1)
                .map(|f| f.constant_term())
                .unwrap_or(0.0);
            r[k] - mu
        })
        .collect();
    Ok(SquaresDecomposition {
        beta_star,
        phis,
        alphas,
        direction_log: log,
    })
}

/// Smallest eigenvalue of `−B**` (symmetric eigensolver); the audit
/// oracle for [`beta_star_squares`].
pub fn beta_star_eig(bss: &DMatrix<f64>) -> f64 {
    let sym = nalgebra::SymmetricEigen::new(-bss.clone());
    sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// l2 certificate for a homogeneous birth–death chain via completing
/// squares under the symmetrizing weights.
pub fn bd_l2_bound(model: &ChainModel) -> Result<(BoundCertificate, SquaresDecomposition)> {
    let d = symmetrize_bd(model)?;
    let bss = weight_conjugate(&build_bstar(model)?, &d)?.eval(0.0);
    let dec = beta_star_squares(&bss, model)?;
    let cert = BoundCertificate {
        schema_version: SCHEMA_VERSION,
        method: Method::Lyapunov,
        rate: RateSpec::Constant {
            value: dec.beta_star,
        },
        constant: 1.0,
        norm: NormTag::L2,
        weights: d,
        sharp: true,
        valid_from: 0.0,
        model_hash: model_hash(model),
        details: Some(serde_json::to_value(&dec).expect("decomposition serializes")),
    };
    Ok((cert, dec))
}

/// Closed-form β* for the pure-batch-arrival chain: `a_1 = 0`,
/// `a_k = λ` for `k ≥ 2`, services `μ_k > 0`. Under the weights
/// `d_{k+1} = d_k √(μ_k/λ)` the off-diagonal part of `B**` is
/// antisymmetric, so `β* = min_k(−b**_kk)`; with the finite boundary at
/// `S` (batches that would overflow are impossible) the diagonal gives
///
/// ```text
/// β* = min((S−1)λ+μ_1, (S−2)λ+μ_2, …, λ+μ_{S−1}, μ_S).
/// ```
///
/// When β* coincides with the decay parameter (checked against the
/// spectrum of `B*`) the certificate is marked sharp.
pub fn batch_arrival_bound(model: &ChainModel) -> Result<BoundCertificate> {
    if model.class != ChainClass::BatchArrival {
        return Err(Error::NotApplicable(
            "the closed-form l2 bound needs a batch-arrival chain".into(),
        ));
    }
    if !model.is_homogeneous() {
        return Err(Error::NotApplicable(
            "the closed-form l2 bound needs constant rates".into(),
        ));
    }
    let s = model.size;
    if let Some(a1) = model.arrival_batch.get(&1) {
        if a1.constant_term() != 0.0 {
            return Err(Error::NotApplicable(
                "single arrivals must be absent (a_1 = 0)".into(),
            ));
        }
    }
    let mut lambda = None;
    for k in 2..=s {
        let ak = model
            .arrival_batch
            .get(&k)
            .map(|f| f.constant_term())
            .unwrap_or(0.0);
        match lambda {
            None => lambda = Some(ak),
            Some(l) if (ak - l).abs() > 0.0 => {
                return Err(Error::NotApplicable(format!(
                    "batch-arrival rates must share one value λ; a_{k} = {ak} differs from {l}"
                )));
            }
            _ => {}
        }
    }
    let lambda = lambda.unwrap_or(0.0);
    if lambda <= 0.0 {
        return Err(Error::NotApplicable(
            "batch-arrival rate λ must be positive".into(),
        ));
    }
    let mut mu = vec![0.0; s + 1];
    for k in 1..=s {
        mu[k] = model
            .death_rate(k)
            .map(|f| f.constant_term())
            .unwrap_or(0.0);
        if mu[k] <= 0.0 {
            return Err(Error::NotApplicable(format!(
                "service rate μ_{k} must be positive"
            )));
        }
    }
    let beta_star = (1..=s)
        .map(|k| {
            if k < s {
                (s - k) as f64 * lambda + mu[k]
            } else {
                mu[s]
            }
        })
        .fold(f64::INFINITY, f64::min);
    let mut d = vec![1.0_f64; s];
    for k in 1..s {
        d[k] = d[k - 1] * (mu[k] / lambda).sqrt();
    }
    let decay = -build_bstar(model)?
        .eval(0.0)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundCertificate {
        schema_version: SCHEMA_VERSION,
        method: Method::Lyapunov,
        rate: RateSpec::Constant { value: beta_star },
        constant: 1.0,
        norm: NormTag::L2,
        weights: WeightVector::unsigned(d)?,
        sharp: (beta_star - decay).abs() <= 1e-9,
        valid_from: 0.0,
        model_hash: model_hash(model),
        details: None,
    })
}

/// Time-varying l2 certificate for weights making the off-diagonal part
/// of `B**(t)` antisymmetric: then `dV/dt = 2 Σ b**_kk(t) w_k²`, so any
/// `rate(t) ≤ min_k (−b**_kk(t))` certifies `C = 1` decay.
///
/// With `proposed_rate` supplied, that rate is verified against the
/// diagonal minimum on the grid and certified as given (useful when a
/// clean closed form undercuts the raw sampled minimum); otherwise the
/// sampled minimum itself is certified.
pub fn antisym_offdiag_bound(
    model: &ChainModel,
    d: &WeightVector,
    n: usize,
    proposed_rate: Option<&RateFunction>,
) -> Result<BoundCertificate> {
    let bss = weight_conjugate(&build_bstar(model)?, d)?;
    let s = bss.dim();
    let grid = period_grid(n);
    for &t in &grid {
        let m = bss.eval(t);
        for i in 0..s {
            for j in 0..i {
                let sum = m[(i, j)] + m[(j, i)];
                if sum.abs() > 1e-9 {
                    return Err(Error::NotApplicable(format!(
                        "off-diagonal pair ({i},{j}) at t = {t} sums to {sum:.3e}; \
                         the antisymmetry hypothesis fails"
                    )));
                }
            }
        }
    }
    let diag_min = SampledFn::new(
        grid.iter()
            .map(|&t| {
                let m = bss.eval(t);
                (0..s).map(|k| -m[(k, k)]).fold(f64::INFINITY, f64::min)
            })
            .collect(),
    );
    let rate = match proposed_rate {
        Some(f) => {
            for (i, &t) in grid.iter().enumerate() {
                let v = f.eval(t);
                if v > diag_min.samples[i] + 1e-12 {
                    return Err(Error::NotApplicable(format!(
                        "proposed rate {v} exceeds the diagonal minimum {} at t = {t}",
                        diag_min.samples[i]
                    )));
                }
            }
            RateSpec::Trig { rate: f.clone() }
        }
        None => {
            if model.is_homogeneous() {
                RateSpec::Constant {
                    value: diag_min.samples[0],
                }
            } else {
                RateSpec::Sampled { rate: diag_min }
            }
        }
    };
    Ok(BoundCertificate {
        schema_version: SCHEMA_VERSION,
        method: Method::Lyapunov,
        rate,
        constant: 1.0,
        norm: NormTag::L2,
        weights: d.clone(),
        sharp: false,
        valid_from: 0.0,
        model_hash: model_hash(model),
        details: None,
    })
}

/// Rebuilds the quadratic form of the decomposition and returns the
/// largest absolute deviation from `−B**` entrywise.
pub fn reconstruction_residual(dec: &SquaresDecomposition, bss: &DMatrix<f64>) -> f64 {
    let s = bss.nrows();
    let mut q = DMatrix::zeros(s, s);
    for k in 0..s.saturating_sub(1) {
        q[(k, k)] += dec.beta_star;
    }
    let (_, o) = match tridiagonal_coeffs(bss) {
        Ok(v) => v,
        Err(_) => return f64::INFINITY,
    };
    for k in 0..s - 1 {
        let a = dec.alphas[k];
        let b = if a > 0.0 { o[k] / a } else { 0.0 };
        q[(k, k)] += a * a;
        q[(k + 1, k + 1)] += b * b;
        q[(k, k + 1)] -= a * b;
        q[(k + 1, k)] -= a * b;
    }
    q[(s - 1, s - 1)] += dec.beta_star + dec.alphas[s - 1] * dec.alphas[s - 1];
    let target = -bss;
    (&q - &target).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn bd(s: usize, lam: &[f64], mu: &[f64]) -> ChainModel {
        ChainModel {
            class: ChainClass::BirthDeath,
            size: s,
            truncation_of_infinite: false,
            birth: lam
                .iter()
                .enumerate()
                .map(|(i, &v)| (i, RateFunction::constant(v)))
                .collect(),
            death: mu
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + 1, RateFunction::constant(v)))
                .collect(),
            arrival_batch: BTreeMap::new(),
            service_batch: BTreeMap::new(),
        }
    }

    #[test]
    fn symmetrize_examples() {
        let d = symmetrize_bd(&bd(3, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(d.d, vec![1.0, 1.0, 1.0]);

        let d = symmetrize_bd(&bd(2, &[1.0, 2.0], &[8.0, 1.0])).unwrap();
        assert!((d.d[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn symmetrized_matrix_is_symmetric() {
        let m = bd(5, &[0.7, 2.0, 1.1, 0.4, 1.9], &[1.3, 0.6, 2.2, 0.9, 3.1]);
        let d = symmetrize_bd(&m).unwrap();
        let bss = weight_conjugate(&build_bstar(&m).unwrap(), &d)
            .unwrap()
            .eval(0.0);
        assert!((&bss - bss.transpose()).amax() < 1e-12);
    }

    #[test]
    fn squares_trivial_cases() {
        let m1 = bd(1, &[2.0], &[3.0]);
        let bss = DMatrix::from_row_slice(1, 1, &[-5.0]);
        let dec = beta_star_squares(&bss, &m1).unwrap();
        assert!((dec.beta_star - 5.0).abs() < 1e-10);

        let m2 = bd(2, &[1.0, 1.0], &[1.0, 1.0]);
        let bss = weight_conjugate(&build_bstar(&m2).unwrap(), &symmetrize_bd(&m2).unwrap())
            .unwrap()
            .eval(0.0);
        let dec = beta_star_squares(&bss, &m2).unwrap();
        assert!((dec.beta_star - 1.0).abs() < 1e-9);
        assert!(reconstruction_residual(&dec, &bss) < 1e-9);
    }

    #[test]
    fn squares_match_eigen_oracle() {
        let m = bd(6, &[0.7, 2.0, 1.1, 0.4, 1.9, 0.8], &[1.3, 0.6, 2.2, 0.9, 3.1, 1.4]);
        let bss = weight_conjugate(&build_bstar(&m).unwrap(), &symmetrize_bd(&m).unwrap())
            .unwrap()
            .eval(0.0);
        let dec = beta_star_squares(&bss, &m).unwrap();
        let oracle = beta_star_eig(&bss);
        assert!((dec.beta_star - oracle).abs() < 1e-8);
        assert!(reconstruction_residual(&dec, &bss) < 1e-9);
    }

    #[test]
    fn eig_oracle_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[-4.0, 0.0, 0.0, -7.0]);
        assert!((beta_star_eig(&m) - 4.0).abs() < 1e-12);
        let t = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        assert!((beta_star_eig(&t) - 1.0).abs() < 1e-12);
    }

    fn pure_batch_arrival(s: usize, lam: f64, mu: &[f64]) -> ChainModel {
        ChainModel {
            class: ChainClass::BatchArrival,
            size: s,
            truncation_of_infinite: false,
            birth: BTreeMap::new(),
            death: mu
                .iter()
                .enumerate()
                .map(|(i, &v)| (i + 1, RateFunction::constant(v)))
                .collect(),
            arrival_batch: (2..=s).map(|k| (k, RateFunction::constant(lam))).collect(),
            service_batch: BTreeMap::new(),
        }
    }

    #[test]
    fn batch_arrival_closed_form() {
        let cert = batch_arrival_bound(&pure_batch_arrival(3, 1.0, &[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(cert.rate, RateSpec::Constant { value } if (value - 3.0).abs() < 1e-14));

        // with μ_S huge the λ+μ_{S−1} term binds
        let cert = batch_arrival_bound(&pure_batch_arrival(3, 1.0, &[1.0, 2.0, 100.0])).unwrap();
        assert!(matches!(cert.rate, RateSpec::Constant { value } if (value - 3.0).abs() < 1e-14));
    }

    #[test]
    fn batch_arrival_rejects_wrong_structure() {
        let m = bd(2, &[1.0, 1.0], &[1.0, 1.0]);
        assert!(matches!(
            batch_arrival_bound(&m),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn antisym_bound_on_homogeneous_three_state_model() {
        let m = pure_batch_arrival(3, 1.0, &[1.0, 2.0, 3.0]);
        let closed = batch_arrival_bound(&m).unwrap();
        let cert = antisym_offdiag_bound(&m, &closed.weights, 5, None).unwrap();
        let a = closed.rate.eval(0.0);
        let b = cert.rate.eval(0.0);
        assert!((a - b).abs() < 1e-12, "closed {a} vs diagonal-min {b}");
    }
}
