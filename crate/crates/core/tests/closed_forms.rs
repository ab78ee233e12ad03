//! The matrix pipeline against hand-written closed forms and an
//! independent dense-generator oracle, for all four structural classes.

mod common;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use ctmc_bounds::matrices::{build_bstar, weight_conjugate, WeightVector};
use ctmc_bounds::model::{ChainClass, ChainModel, Harmonic, RateFunction};

const SAMPLE_TIMES: [f64; 5] = [0.0, 0.17, 0.33, 0.61, 0.98];

fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64, what: &str) {
    assert_eq!(a.nrows(), b.nrows());
    let err = (a - b).amax();
    assert!(err <= tol, "{what}: max deviation {err:.3e} > {tol:.1e}");
}

#[test]
fn birth_death_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let s = rand::Rng::gen_range(&mut rng, 2..9usize);
        let model = random_periodic_bd(&mut rng, s);
        let bstar = build_bstar(&model).unwrap();
        for &t in &SAMPLE_TIMES {
            // tridiagonal: diag −(λ_{k−1}+μ_k), sub λ_k, super μ_k
            let mut m = DMatrix::zeros(s, s);
            for k in 1..=s {
                let lam_prev = model.birth_rate(k - 1).map(|f| f.eval(t)).unwrap_or(0.0);
                let mu_k = model.death_rate(k).map(|f| f.eval(t)).unwrap_or(0.0);
                m[(k - 1, k - 1)] = -(lam_prev + mu_k);
                if k < s {
                    m[(k, k - 1)] = model.birth_rate(k).map(|f| f.eval(t)).unwrap_or(0.0);
                    m[(k - 1, k)] = mu_k;
                }
            }
            assert_close(&bstar.eval(t), &m, 1e-10, "class (i) closed form");
            assert_close(&bstar.eval(t), &oracle_bstar(&model, t), 1e-10, "class (i) oracle");
        }
    }
}

#[test]
fn batch_arrival_closed_form() {
    // distinct a_k and μ_k so every term of the closed form is exercised
    let s = 6;
    let a: Vec<f64> = vec![5.0, 3.0, 2.0, 1.5, 1.0, 0.7];
    let mu: Vec<f64> = vec![2.0, 2.5, 3.0, 3.5, 4.0, 4.5];
    let model = ChainModel {
        class: ChainClass::BatchArrival,
        size: s,
        truncation_of_infinite: true,
        birth: BTreeMap::new(),
        death: mu
            .iter()
            .enumerate()
            .map(|(i, &m)| (i + 1, RateFunction::constant(m)))
            .collect(),
        arrival_batch: a
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1, RateFunction::constant(v)))
            .collect(),
        service_batch: BTreeMap::new(),
    };
    let got = build_bstar(&model).unwrap().eval(0.0);
    let ak = |k: usize| a[k - 1];
    let mut m = DMatrix::zeros(s, s);
    for j in 1..=s {
        // diag −(μ_j + Σ_{i ≤ S−j+1} a_i); super μ_j; lower a_{i−j} − a_{S−j+1}
        let tail: f64 = (1..=s - j + 1).map(ak).sum();
        m[(j - 1, j - 1)] = -(mu[j - 1] + tail);
        if j < s {
            m[(j - 1, j)] = mu[j - 1];
        }
        for i in j + 1..=s {
            m[(i - 1, j - 1)] = ak(i - j) - ak(s - j + 1);
        }
    }
    assert_close(&got, &m, 1e-12, "class (ii) closed form");
    assert_close(&got, &oracle_bstar(&model, 0.0), 1e-12, "class (ii) oracle");
}

#[test]
fn batch_service_closed_form() {
    let s = 6;
    let b: Vec<f64> = vec![4.0, 2.5, 1.5, 1.0, 0.6, 0.3];
    let lam = 1.7;
    let model = ChainModel {
        class: ChainClass::BatchService,
        size: s,
        truncation_of_infinite: true,
        birth: (0..s).map(|i| (i, RateFunction::constant(lam))).collect(),
        death: BTreeMap::new(),
        arrival_batch: BTreeMap::new(),
        service_batch: b
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1, RateFunction::constant(v)))
            .collect(),
    };
    let got = build_bstar(&model).unwrap().eval(0.0);
    let bk = |k: usize| b[k - 1];
    let mut m = DMatrix::zeros(s, s);
    for j in 1..=s {
        // diag −(λ_{j−1} + Σ_{i ≤ j} b_i); sub λ_j; upper b_{j'−j} − b_{j'}
        let head: f64 = (1..=j).map(bk).sum();
        m[(j - 1, j - 1)] = -(lam + head);
        if j < s {
            m[(j, j - 1)] = lam;
        }
        for jp in j + 1..=s {
            m[(j - 1, jp - 1)] = bk(jp - j) - bk(jp);
        }
    }
    assert_close(&got, &m, 1e-12, "class (iii) closed form");
    assert_close(&got, &oracle_bstar(&model, 0.0), 1e-12, "class (iii) oracle");
}

#[test]
fn batch_both_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let model = random_batch_both(&mut rng, 7);
        let bstar = build_bstar(&model).unwrap();
        for &t in &SAMPLE_TIMES {
            assert_close(&bstar.eval(t), &oracle_bstar(&model, t), 1e-10, "class (iv) oracle");
        }
    }
}

#[test]
fn similarity_preserves_spectrum_and_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let model = random_periodic_bd(&mut rng, 5);
    let bstar = build_bstar(&model).unwrap();
    let d = WeightVector::unsigned(vec![1.0, 2.0, 0.5, 3.0, 1.5]).unwrap();
    let bss = weight_conjugate(&bstar, &d).unwrap();
    for &t in &SAMPLE_TIMES {
        let m0 = bstar.eval(t);
        let m1 = bss.eval(t);
        for i in 0..5 {
            assert!((m0[(i, i)] - m1[(i, i)]).abs() < 1e-12, "diagonal invariant");
        }
        let mut e0: Vec<f64> = m0.complex_eigenvalues().iter().map(|z| z.re).collect();
        let mut e1: Vec<f64> = m1.complex_eigenvalues().iter().map(|z| z.re).collect();
        e0.sort_by(f64::total_cmp);
        e1.sort_by(f64::total_cmp);
        for (x, y) in e0.iter().zip(e1.iter()) {
            assert!((x - y).abs() < 1e-8, "spectrum invariant: {x} vs {y}");
        }
    }
}

#[test]
fn kolmogorov_columns_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..5 {
        let model = random_batch_both(&mut rng, 6);
        for &t in &SAMPLE_TIMES {
            let a = oracle_a(&model, t);
            for j in 0..a.ncols() {
                assert!(a.column(j).sum().abs() < 1e-12);
            }
        }
    }
}

#[test]
fn example_one_lag_two_entries_are_structural_zeros() {
    // equal batch rates for k ≥ 2 cancel exactly, which the geometric
    // weights rely on at full size
    let model = ctmc_bounds::presets::bulk_arrival_model(12, 3.0);
    let bstar = build_bstar(&model).unwrap();
    for &t in &SAMPLE_TIMES {
        let m = bstar.eval(t);
        for i in 0..12 {
            for j in 0..12 {
                if i > j + 1 || j > i + 1 {
                    assert_eq!(m[(i, j)], 0.0, "entry ({i},{j}) not an exact zero");
                }
            }
        }
    }
}

#[test]
fn periodic_rate_evaluates_like_its_harmonics() {
    let f = RateFunction::new(
        2.0,
        vec![
            Harmonic { k: 1, sin: 0.5, cos: -0.25 },
            Harmonic { k: 3, sin: 0.0, cos: 1.0 },
        ],
    );
    for &t in &SAMPLE_TIMES {
        let w = std::f64::consts::TAU * t;
        let expect = 2.0 + 0.5 * w.sin() - 0.25 * w.cos() + (3.0 * w).cos();
        assert!((f.eval(t) - expect).abs() < 1e-12);
        assert!((f.eval(t + 1.0) - f.eval(t)).abs() < 1e-12, "period 1");
    }
}
