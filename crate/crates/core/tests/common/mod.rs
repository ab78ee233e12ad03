//! Shared builders and an independent dense-generator oracle for the
//! integration tests. The oracle constructs the generator, the reduced
//! matrix and its similarity transform from scratch, without touching
//! the library's matrix pipeline, so agreement is meaningful.
#![allow(dead_code)] // each test target uses a different subset

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use ctmc_bounds::model::{ChainClass, ChainModel, Harmonic, RateFunction};

pub fn bd_model(lambdas: &[RateFunction], mus: &[RateFunction]) -> ChainModel {
    let s = lambdas.len();
    assert_eq!(mus.len(), s);
    ChainModel {
        class: ChainClass::BirthDeath,
        size: s,
        truncation_of_infinite: false,
        birth: lambdas.iter().cloned().enumerate().collect(),
        death: mus.iter().cloned().enumerate().map(|(i, f)| (i + 1, f)).collect(),
        arrival_batch: BTreeMap::new(),
        service_batch: BTreeMap::new(),
    }
}

/// Homogeneous BD chain with rates log-uniform in [0.1, 10].
pub fn random_homogeneous_bd(rng: &mut impl Rng, s: usize) -> ChainModel {
    let lo = 0.1_f64.ln();
    let hi = 10.0_f64.ln();
    let lambdas: Vec<RateFunction> = (0..s)
        .map(|_| RateFunction::constant(rng.gen_range(lo..hi).exp()))
        .collect();
    let mus: Vec<RateFunction> = (0..s)
        .map(|_| RateFunction::constant(rng.gen_range(lo..hi).exp()))
        .collect();
    bd_model(&lambdas, &mus)
}

/// Periodic (inhomogeneous) BD chain with positive rates.
pub fn random_periodic_rate(rng: &mut impl Rng) -> RateFunction {
    let base: f64 = rng.gen_range(1.0..5.0);
    let amp = rng.gen_range(0.0..0.8) * base;
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    RateFunction::new(
        base,
        vec![Harmonic {
            k: 1,
            sin: amp * phase.cos(),
            cos: amp * phase.sin(),
        }],
    )
}

pub fn random_periodic_bd(rng: &mut impl Rng, s: usize) -> ChainModel {
    let lambdas: Vec<RateFunction> = (0..s).map(|_| random_periodic_rate(rng)).collect();
    let mus: Vec<RateFunction> = (0..s).map(|_| random_periodic_rate(rng)).collect();
    bd_model(&lambdas, &mus)
}

/// Batch-arrival chain with uniform tail: a_1 = 0, a_k = λ for k ≥ 2,
/// single services μ_1..μ_S.
pub fn pure_batch_arrival(s: usize, lambda: f64, mus: &[f64]) -> ChainModel {
    assert_eq!(mus.len(), s);
    let mut arrival = BTreeMap::new();
    for k in 2..=s {
        arrival.insert(k, RateFunction::constant(lambda));
    }
    ChainModel {
        class: ChainClass::BatchArrival,
        size: s,
        truncation_of_infinite: false,
        birth: BTreeMap::new(),
        death: mus
            .iter()
            .enumerate()
            .map(|(i, &m)| (i + 1, RateFunction::constant(m)))
            .collect(),
        arrival_batch: arrival,
        service_batch: BTreeMap::new(),
    }
}

/// Single arrivals λ (state-independent), service only in full batches
/// of size S at rate b.
pub fn pure_batch_service(s: usize, lambda: RateFunction, b: RateFunction) -> ChainModel {
    ChainModel {
        class: ChainClass::BatchService,
        size: s,
        truncation_of_infinite: false,
        birth: (0..s).map(|i| (i, lambda.clone())).collect(),
        death: BTreeMap::new(),
        arrival_batch: BTreeMap::new(),
        service_batch: [(s, b)].into(),
    }
}

/// Class-(iii) chain with strictly decreasing batch-service rates, which
/// keeps B*(t) essentially non-negative.
pub fn decreasing_batch_service(rng: &mut impl Rng, s: usize) -> ChainModel {
    let lambda = RateFunction::constant(rng.gen_range(0.5..4.0));
    let b1: f64 = rng.gen_range(1.0..4.0);
    let decay: f64 = rng.gen_range(0.3..0.8);
    let service: BTreeMap<usize, RateFunction> = (1..=s)
        .map(|k| (k, RateFunction::constant(b1 * decay.powi(k as i32 - 1))))
        .collect();
    ChainModel {
        class: ChainClass::BatchService,
        size: s,
        truncation_of_infinite: false,
        birth: (0..s).map(|i| (i, lambda.clone())).collect(),
        death: BTreeMap::new(),
        arrival_batch: BTreeMap::new(),
        service_batch: service,
    }
}

/// Class-(iv) chain with a couple of batch sizes on each side.
pub fn random_batch_both(rng: &mut impl Rng, s: usize) -> ChainModel {
    let mut arrival = BTreeMap::new();
    let mut service = BTreeMap::new();
    for k in 1..=3.min(s) {
        arrival.insert(k, RateFunction::constant(rng.gen_range(0.2..2.0)));
        service.insert(k, RateFunction::constant(rng.gen_range(0.2..2.0)));
    }
    ChainModel {
        class: ChainClass::BatchBoth,
        size: s,
        truncation_of_infinite: false,
        birth: BTreeMap::new(),
        death: BTreeMap::new(),
        arrival_batch: arrival,
        service_batch: service,
    }
}

/// Dense intensity matrix q_{ij} (from i to j) with out-of-range batch
/// transitions dropped, built directly from the model's rate maps.
pub fn oracle_q(model: &ChainModel, t: f64) -> DMatrix<f64> {
    let n = model.size + 1;
    let mut q = DMatrix::zeros(n, n);
    for (&i, f) in &model.birth {
        if i + 1 < n {
            q[(i, i + 1)] += f.eval(t);
        }
    }
    for (&i, f) in &model.death {
        if i >= 1 && i < n {
            q[(i, i - 1)] += f.eval(t);
        }
    }
    for (&k, f) in &model.arrival_batch {
        for i in 0..n {
            if i + k < n {
                q[(i, i + k)] += f.eval(t);
            }
        }
    }
    for (&k, f) in &model.service_batch {
        for i in 0..n {
            if k <= i {
                q[(i, i - k)] += f.eval(t);
            }
        }
    }
    q
}

/// Kolmogorov coefficient matrix A(t) (columns sum to zero) from the
/// oracle intensities.
pub fn oracle_a(model: &ChainModel, t: f64) -> DMatrix<f64> {
    let q = oracle_q(model, t);
    let n = q.nrows();
    let mut a = q.transpose();
    for j in 0..n {
        let total: f64 = q.row(j).sum();
        a[(j, j)] -= total;
    }
    a
}

/// Independent B*(t) = T (A_sub − column-0 shift) T⁻¹.
pub fn oracle_bstar(model: &ChainModel, t: f64) -> DMatrix<f64> {
    let a = oracle_a(model, t);
    let s = model.size;
    let mut b = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in 0..s {
            b[(i, j)] = a[(i + 1, j + 1)] - a[(i + 1, 0)];
        }
    }
    let mut t_mat = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            t_mat[(i, j)] = 1.0;
        }
    }
    let t_inv = t_mat.clone().try_inverse().expect("T invertible");
    &t_mat * b * t_inv
}
