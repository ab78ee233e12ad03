//! Differential-inequality (l1) certificates with signed ε-power weight
//! templates.
//!
//! On an interval where the coordinates of `u = T y` keep fixed signs,
//! the norm `‖z‖ = Σ d_j u_j` (with `sign d_j = sign u_j`) obeys
//! `d‖z‖/dt ≤ −α_D(t) ‖z‖` whenever every column sum of
//! `ã(t) = D B*(t) D⁻¹` is at most `−α_D(t)`. The ε-power templates
//! assign magnitudes that restart at each sign change; their extreme
//! magnitude ratio is `ε^{1−S}`, the constant converting back to plain
//! l1 across all patterns.

use serde::{Deserialize, Serialize};

use crate::bound::{
    model_hash, BoundCertificate, Method, NormTag, RateSpec, SampledFn, SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::matrices::{period_grid, MatrixFn, WeightVector};
use crate::model::{ChainClass, ChainModel, RateFunction};

/// Coordinate signs on an interval of sign consistency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignPattern {
    /// ±1 per reduced coordinate 1..S.
    pub signs: Vec<i8>,
}

impl SignPattern {
    pub fn all_positive(s: usize) -> Self {
        Self { signs: vec![1; s] }
    }

    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidWeights(
                "sign pattern entries must be ±1".into(),
            ));
        }
        Ok(Self { signs })
    }

    /// 0-based indices where a new sign run starts (first run excluded).
    pub fn change_points(&self) -> Vec<usize> {
        (1..self.signs.len())
            .filter(|&i| self.signs[i] != self.signs[i - 1])
            .collect()
    }

    /// Maximal runs of constant sign as (start, end) inclusive, 0-based.
    fn runs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.signs.len() {
            if self.signs[i] != self.signs[i - 1] {
                out.push((start, i - 1));
                start = i;
            }
        }
        out.push((start, self.signs.len() - 1));
        out
    }
}

/// A per-pattern bound: the signed template and the certified rate
/// `α_D(t) = min_j (−Σ_i ã_{ij}(t))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatternBound {
    pub pattern: SignPattern,
    pub d: WeightVector,
    pub alpha_d: SampledFn,
}

/// ε-power magnitudes restarting at each sign change: within the run
/// ending at 0-based index `m`, coordinate `i` (0-based) gets exponent
/// `(S−m) + (i−p)` where `p` starts the run — the exponents over all
/// coordinates are a permutation of `1..S`, so the magnitude ratio is
/// `ε^{1−S}` for every pattern. With `ε = 1` this is the unit template.
pub fn template_weights(pattern: &SignPattern, eps: f64) -> Result<WeightVector> {
    if !(0.0 < eps && eps <= 1.0) {
        return Err(Error::InvalidWeights(format!(
            "ε must lie in (0, 1] (got {eps})"
        )));
    }
    let s = pattern.signs.len();
    let mut d = vec![0.0_f64; s];
    for (p, m) in pattern.runs() {
        for i in p..=m {
            let exponent = (s - 1 - m) + (i - p) + 1;
            d[i] = pattern.signs[i] as f64 * eps.powi(exponent as i32);
        }
    }
    WeightVector::signed(d)
}

/// `α_D(t)` for an explicit signed weight vector, sampled on a uniform
/// `n`-point period grid.
pub fn pattern_alpha(bstar: &MatrixFn, d: &WeightVector, n: usize) -> PatternBound {
    let tilde = bstar.diag_similarity(&d.d);
    let grid = period_grid(n);
    let alpha_d = SampledFn::new(
        grid.iter()
            .map(|&t| {
                tilde
                    .column_sums(t)
                    .iter()
                    .map(|c| -c)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
    );
    PatternBound {
        pattern: SignPattern {
            signs: d.d.iter().map(|&x| if x < 0.0 { -1 } else { 1 }).collect(),
        },
        d: d.clone(),
        alpha_d,
    }
}

fn batch_service_structure(model: &ChainModel) -> Result<RateFunction> {
    if model.class != ChainClass::BatchService {
        return Err(Error::NotApplicable(
            "the ε-template bound needs a batch-service chain".into(),
        ));
    }
    let s = model.size;
    let mut lambda: Option<RateFunction> = None;
    for i in 0..s {
        let f = model
            .birth_rate(i)
            .cloned()
            .unwrap_or_else(RateFunction::zero);
        match &lambda {
            None => lambda = Some(f),
            Some(l) if *l != f => {
                return Err(Error::NotApplicable(format!(
                    "arrival rate λ_{i} differs from λ_0; the construction needs \
                     state-independent arrivals"
                )));
            }
            _ => {}
        }
    }
    for (k, f) in &model.service_batch {
        if *k != s && f.sup_bound() != 0.0 {
            return Err(Error::NotApplicable(format!(
                "service batch size {k} present; only b_S may be nonzero"
            )));
        }
    }
    if model
        .service_batch
        .get(&s)
        .map(|f| f.sup_bound() == 0.0)
        .unwrap_or(true)
    {
        return Err(Error::NotApplicable(
            "the full-flush service rate b_S is missing".into(),
        ));
    }
    lambda.ok_or_else(|| Error::NotApplicable("arrival rate λ is missing".into()))
}

/// §-template certificate for the single-arrival, full-batch-service
/// chain (`λ(t)` state-independent, only `b_S(t)` nonzero): every sign
/// pattern certifies rate `(1−ε)·λ(·)`, and converting the signed
/// weighted norm back to plain l1 costs `C = ε^{1−S}`.
pub fn batch_service_bound(model: &ChainModel, eps: f64) -> Result<BoundCertificate> {
    if !(0.0 < eps && eps < 1.0) {
        return Err(Error::InvalidWeights(format!(
            "ε must lie in (0, 1) (got {eps})"
        )));
    }
    let lambda = batch_service_structure(model)?;
    let s = model.size;
    let rate = lambda.scaled(1.0 - eps);
    let d = template_weights(&SignPattern::all_positive(s), eps)?;
    Ok(BoundCertificate {
        schema_version: SCHEMA_VERSION,
        method: Method::DiffIneq,
        rate: if rate.is_constant() {
            RateSpec::Constant {
                value: rate.constant_term(),
            }
        } else {
            RateSpec::Trig { rate }
        },
        constant: eps.powi(1 - s as i32),
        norm: NormTag::L1,
        weights: d,
        sharp: false,
        valid_from: 0.0,
        model_hash: model_hash(model),
        details: Some(serde_json::json!({ "eps": eps })),
    })
}

/// Exhaustive minimum over all `2^{S−1}` sign patterns (global sign
/// flip is a symmetry): per pattern the best ε from `eps_grid` is kept,
/// then the pointwise cross-pattern minimum is returned together with
/// the pattern attaining the smallest rate (lexicographic tie-break).
pub fn exhaustive_alpha(
    bstar: &MatrixFn,
    eps_grid: &[f64],
    n: usize,
) -> Result<(SampledFn, SignPattern)> {
    let s = bstar.dim();
    if s > 15 {
        return Err(Error::TooLarge { s, limit: 15 });
    }
    if eps_grid.is_empty() {
        return Err(Error::InvalidWeights("ε grid is empty".into()));
    }
    let mut alpha_star: Option<Vec<f64>> = None;
    let mut worst: Option<(f64, SignPattern)> = None;
    for mask in 0..(1u32 << (s - 1)) {
        let mut signs = vec![1i8; s];
        for i in 1..s {
            if mask >> (i - 1) & 1 == 1 {
                signs[i] = -1;
            }
        }
        let pattern = SignPattern { signs };
        // best ε for this pattern: largest worst-case rate
        let mut best: Option<Vec<f64>> = None;
        let mut best_score = f64::NEG_INFINITY;
        for &eps in eps_grid {
            let d = template_weights(&pattern, eps)?;
            let pb = pattern_alpha(bstar, &d, n);
            let score = pb.alpha_d.min();
            if score > best_score {
                best_score = score;
                best = Some(pb.alpha_d.samples);
            }
        }
        let best = best.expect("eps grid nonempty");
        match &mut alpha_star {
            None => alpha_star = Some(best),
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(best.iter()) {
                    *a = a.min(*b);
                }
            }
        }
        let is_worse = match &worst {
            None => true,
            Some((score, _)) => best_score < *score,
        };
        if is_worse {
            worst = Some((best_score, pattern));
        }
    }
    let (_, worst_pattern) = worst.expect("at least one pattern");
    Ok((SampledFn::new(alpha_star.unwrap()), worst_pattern))
}

/// Plain-l1 certificate from an exhaustive (or closed-form) rate: the
/// conversion constant is the extreme magnitude ratio of the template
/// weights, `ε^{1−S}` for the ε-power templates.
pub fn assemble_certificate(
    model: &ChainModel,
    rate: RateSpec,
    weights: &WeightVector,
) -> BoundCertificate {
    let max = weights
        .d
        .iter()
        .map(|x| x.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    let min = weights
        .d
        .iter()
        .map(|x| x.abs())
        .fold(f64::INFINITY, f64::min);
    BoundCertificate {
        schema_version: SCHEMA_VERSION,
        method: Method::DiffIneq,
        rate,
        constant: max / min,
        norm: NormTag::L1,
        weights: weights.clone(),
        sharp: false,
        valid_from: 0.0,
        model_hash: model_hash(model),
        details: None,
    }
}
