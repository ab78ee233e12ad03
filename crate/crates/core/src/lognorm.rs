//! Logarithmic-norm (l1) convergence certificates.
//!
//! For an essentially non-negative `B*(t)` and positive weights `d`, the
//! negated column sums of `B**(t) = D B*(t) D⁻¹`,
//!
//! ```text
//! α_i(t) = −Σ_j b**_{ji}(t),   α(t) = min_i α_i(t),   β(t) = max_i α_i(t),
//! ```
//!
//! give `‖w(t)‖₁ ≤ exp(−∫ α) ‖w(s)‖₁`, and for componentwise nonnegative
//! `w(s)` also the lower envelope `exp(−∫ β)`. The sharp-weight
//! construction equalizes all `α_i` for constant birth–death generators
//! via the Perron eigenvector of the transposed shifted matrix.

use nalgebra::{DMatrix, DVector};

use crate::bound::{
    BoundCertificate, Method, NormTag, RateSpec, SampledFn, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::matrices::{
    build_bstar, is_essentially_nonnegative, period_grid, weight_conjugate, MatrixFn,
    WeightVector,
};
use crate::model::ChainModel;
use crate::bound::model_hash;

/// Default number of grid points over one period for sampled rates.
pub const DEFAULT_GRID: usize = 2001;

/// l1 logarithmic norm: max over columns of diagonal plus absolute
/// off-diagonal column sum.
pub fn log_norm(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols());
    (0..m.ncols())
        .map(|j| {
            let mut s = m[(j, j)];
            for i in 0..m.nrows() {
                if i != j {
                    s += m[(i, j)].abs();
                }
            }
            s
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Per-column rate functions and their pointwise envelopes.
#[derive(Debug, Clone)]
pub struct RatePair {
    pub alpha: SampledFn,
    pub beta: SampledFn,
    pub per_state: Vec<SampledFn>,
}

/// `α_i`, `α`, `β` sampled on a uniform `n`-point period grid.
pub fn alpha_functions(bss: &MatrixFn, n: usize) -> RatePair {
    let s = bss.dim();
    let grid = period_grid(n);
    let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(n); s];
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for &t in &grid {
        let cols = bss.column_sums(t);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, c) in cols.iter().enumerate() {
            let a = -c;
            per[i].push(a);
            lo = lo.min(a);
            hi = hi.max(a);
        }
        alpha.push(lo);
        beta.push(hi);
    }
    RatePair {
        alpha: SampledFn::new(alpha),
        beta: SampledFn::new(beta),
        per_state: per.into_iter().map(SampledFn::new).collect(),
    }
}

/// Result of [`ergodicity_bound`]: the upper certificate plus the lower
/// envelope rate applicable to componentwise nonnegative differences.
#[derive(Debug, Clone)]
pub struct ErgodicityBound {
    pub certificate: BoundCertificate,
    /// β(·): for nonnegative w(s), ‖w(t)‖₁ ≥ exp(−∫β)·‖w(s)‖₁.
    pub lower_rate: RateSpec,
    pub rates: RatePair,
    /// Positive per-period mean of α, so ∫α diverges.
    pub ergodic: bool,
}

/// Weighted-l1 certificate with C = 1, refusing when `B*(t)` has a
/// negative off-diagonal entry on the grid.
pub fn ergodicity_bound(
    model: &ChainModel,
    d: &WeightVector,
    n: usize,
) -> Result<ErgodicityBound> {
    if d.signed {
        return Err(Error::InvalidWeights(
            "log-norm certificates require positive weights".into(),
        ));
    }
    let mut d = d.clone();
    if d.d[0] != 1.0 {
        // d_1 = 1 normalization; column sums are unchanged.
        let d1 = d.d[0];
        for x in &mut d.d {
            *x /= d1;
        }
    }
    let bstar = build_bstar(model)?;
    let grid = period_grid(n);
    if !is_essentially_nonnegative(&bstar, &grid) {
        return Err(Error::NotApplicable(
            "B*(t) is not essentially non-negative on the sample grid; \
             the weighted-l1 bound does not apply (use the differential-inequality method)"
                .into(),
        ));
    }
    let bss = weight_conjugate(&bstar, &d)?;
    let rates = alpha_functions(&bss, n);
    let spread: f64 = rates
        .alpha
        .samples
        .iter()
        .zip(rates.beta.samples.iter())
        .map(|(a, b)| (b - a).abs())
        .fold(0.0, f64::max);
    let sharp = spread <= 1e-9;
    let constant_rate = model.is_homogeneous();
    let (rate, lower_rate) = if constant_rate {
        (
            RateSpec::Constant {
                value: rates.alpha.samples[0],
            },
            RateSpec::Constant {
                value: rates.beta.samples[0],
            },
        )
    } else {
        (
            RateSpec::Sampled {
                rate: rates.alpha.clone(),
            },
            RateSpec::Sampled {
                rate: rates.beta.clone(),
            },
        )
    };
    let ergodic = rate.mean() > 0.0;
    Ok(ErgodicityBound {
        certificate: BoundCertificate {
            schema_version: SCHEMA_VERSION,
            method: Method::LogNorm,
            rate,
            constant: 1.0,
            norm: NormTag::L1,
            weights: d,
            sharp,
            valid_from: 0.0,
            model_hash: model_hash(model),
            details: None,
        },
        lower_rate,
        rates,
        ergodic,
    })
}

/// Sharp weights for a constant essentially non-negative `B*`: the
/// Perron eigenvector of `B*ᵀ + mI` inverted componentwise. All column
/// sums of the reweighted matrix then equal `−α*`, the decay parameter.
pub fn decay_parameter_weights(bstar: &DMatrix<f64>) -> Result<(WeightVector, f64)> {
    let s = bstar.nrows();
    assert_eq!(s, bstar.ncols());
    for i in 0..s {
        for j in 0..s {
            if i != j && bstar[(i, j)] < -1e-12 {
                return Err(Error::NotApplicable(format!(
                    "B* entry ({i},{j}) = {} is negative; Perron construction needs an \
                     essentially non-negative matrix",
                    bstar[(i, j)]
                )));
            }
        }
    }
    let m = (0..s)
        .map(|i| bstar[(i, i)].abs())
        .fold(0.0_f64, f64::max);
    // Shift by m + 1 rather than m: with exactly m the shifted matrix can
    // have an all-zero diagonal (uniform chains), making it bipartite and
    // the power iteration 2-periodic. The extra +1 keeps it primitive and
    // only moves the Perron value by 1.
    let shift = m + 1.0;
    let mut c = bstar.transpose();
    for i in 0..s {
        c[(i, i)] += shift;
    }
    // Power iteration, l∞ normalization, Cauchy tolerance 1e-12.
    let cap = 1_000_000usize;
    let mut x = DVector::from_element(s, 1.0);
    let mut converged = false;
    for _ in 0..cap {
        let y = &c * &x;
        let norm = y.amax();
        if norm == 0.0 {
            // C' annihilates a positive vector, so C' = 0 (S = 1 with a
            // pure-diagonal B*): the Perron value is 0 and x is fine.
            converged = true;
            break;
        }
        if !norm.is_finite() {
            return Err(Error::Numeric("power iteration overflowed".into()));
        }
        let y = y / norm;
        let diff = (&y - &x).amax();
        x = y;
        if diff < 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PowerIterationDiverged(cap));
    }
    // Rayleigh-style refinement of the Perron value.
    let cx = &c * &x;
    let mut lambda = cx.dot(&x) / x.dot(&x);
    // The Cauchy stop undersells the eigenvector error when the Perron
    // gap is small, so polish with a few shifted inverse iterations.
    for _ in 0..4 {
        let mut shifted = c.clone();
        for i in 0..s {
            shifted[(i, i)] -= lambda + 1e-11 * (1.0 + lambda.abs());
        }
        let Some(y) = shifted.lu().solve(&x) else {
            break;
        };
        let norm = y.amax();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        // a Perron vector has one sign; keep the positive representative
        let idx = (0..s)
            .max_by(|&a, &b| y[a].abs().total_cmp(&y[b].abs()))
            .expect("nonempty");
        let y = &y / y[idx];
        if (0..s).any(|i| !y[i].is_finite() || y[i] <= 0.0) {
            break;
        }
        x = y.clone();
        let cy = &c * &y;
        lambda = cy.dot(&y) / y.dot(&y);
    }
    if let Some(i) = (0..s).find(|&i| x[i] <= 0.0) {
        return Err(Error::Numeric(format!(
            "Perron vector component {i} is non-positive ({}); matrix appears reducible",
            x[i]
        )));
    }
    let alpha_star = shift - lambda;
    // d proportional to the Perron vector itself: with xᵀ(B*+mI) = λxᵀ,
    // every column sum of D B* D⁻¹ equals λ−m = −α*.
    let mut d: Vec<f64> = (0..s).map(|i| x[i]).collect();
    let d1 = d[0];
    for v in &mut d {
        *v /= d1;
    }
    // Post-check: equal column sums of D B* D⁻¹.
    for j in 0..s {
        let mut col = 0.0;
        for i in 0..s {
            col += d[i] / d[j] * bstar[(i, j)];
        }
        if (col + alpha_star).abs() > 1e-9 {
            return Err(Error::Numeric(format!(
                "weighted column sum {j} is {col}, expected {}",
                -alpha_star
            )));
        }
    }
    Ok((WeightVector::unsigned(d)?, alpha_star))
}

/// Sharp log-norm certificate for a constant birth–death generator,
/// combining the Perron weights with [`ergodicity_bound`].
pub fn sharp_bd_bound(model: &ChainModel) -> Result<ErgodicityBound> {
    if !model.is_homogeneous() {
        return Err(Error::NotApplicable(
            "sharp weights require a time-constant generator".into(),
        ));
    }
    let bstar = build_bstar(model)?.eval(0.0);
    let (d, _alpha_star) = decay_parameter_weights(&bstar)?;
    let mut out = ergodicity_bound(model, &d, 3)?;
    out.certificate.sharp = true;
    Ok(out)
}
