//! Matrix builders for the reduced forward Kolmogorov system.
//!
//! `A(t)` is the transposed intensity matrix of the chain, `B(t)` the
//! reduced matrix after eliminating state 0 by normalization, and
//! `B*(t) = T B(t) T⁻¹` its conjugate by the all-ones upper-triangular
//! transform. Weighted conjugates `B**(t) = D B*(t) D⁻¹` carry the
//! diagonal similarity that all three bounding methods tune.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainModel, Harmonic, RateFunction};

/// One time-basis function: 1, sin(2πkt) or cos(2πkt).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Basis {
    One,
    Sin(u32),
    Cos(u32),
}

impl Basis {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Basis::One => 1.0,
            Basis::Sin(k) => (std::f64::consts::TAU * k as f64 * t).sin(),
            Basis::Cos(k) => (std::f64::consts::TAU * k as f64 * t).cos(),
        }
    }
}

/// A matrix-valued function of time, stored as a sum of constant
/// matrices times scalar basis functions. Entries are therefore exact
/// linear combinations of the model's rate functions, and evaluation or
/// matrix-vector products cost one pass per basis term.
#[derive(Debug, Clone)]
pub struct MatrixFn {
    dim: usize,
    terms: Vec<(Basis, DMatrix<f64>)>,
}

impl MatrixFn {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Basis, DMatrix<f64>)] {
        &self.terms
    }

    fn term_mut(&mut self, basis: Basis) -> &mut DMatrix<f64> {
        if let Some(pos) = self.terms.iter().position(|(b, _)| *b == basis) {
            &mut self.terms[pos].1
        } else {
            self.terms.push((basis, DMatrix::zeros(self.dim, self.dim)));
            &mut self.terms.last_mut().unwrap().1
        }
    }

    /// Adds `factor * f(t)` to entry `(i, j)`.
    pub fn add_rate(&mut self, i: usize, j: usize, f: &RateFunction, factor: f64) {
        if f.constant_term() != 0.0 {
            self.term_mut(Basis::One)[(i, j)] += factor * f.constant_term();
        }
        for &Harmonic { k, sin, cos } in f.harmonics() {
            if sin != 0.0 {
                self.term_mut(Basis::Sin(k))[(i, j)] += factor * sin;
            }
            if cos != 0.0 {
                self.term_mut(Basis::Cos(k))[(i, j)] += factor * cos;
            }
        }
    }

    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (b, a) in &self.terms {
            m += a * b.eval(t);
        }
        m
    }

    /// `out = M(t) x` without materializing `M(t)`.
    pub fn matvec(&self, t: f64, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for (b, a) in &self.terms {
            let c = b.eval(t);
            if c != 0.0 {
                out.gemv(c, a, x, 1.0);
            }
        }
    }

    /// Entry `(i, j)` as an explicit rate function of time.
    pub fn entry_fn(&self, i: usize, j: usize) -> RateFunction {
        let mut constant = 0.0;
        let mut by_k: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for (b, a) in &self.terms {
            let v = a[(i, j)];
            match b {
                Basis::One => constant += v,
                Basis::Sin(k) => by_k.entry(*k).or_insert((0.0, 0.0)).0 += v,
                Basis::Cos(k) => by_k.entry(*k).or_insert((0.0, 0.0)).1 += v,
            }
        }
        RateFunction::new(
            constant,
            by_k.into_iter()
                .map(|(k, (sin, cos))| Harmonic { k, sin, cos })
                .collect(),
        )
    }

    /// `L · M(t) · R` for constant `L`, `R`.
    pub fn conjugate(&self, left: &DMatrix<f64>, right: &DMatrix<f64>) -> Self {
        Self {
            dim: left.nrows(),
            terms: self
                .terms
                .iter()
                .map(|(b, a)| (*b, left * a * right))
                .collect(),
        }
    }

    /// Diagonal similarity: entry `(i, j)` scaled by `d[i] / d[j]`.
    pub fn diag_similarity(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.dim);
        let mut terms = Vec::with_capacity(self.terms.len());
        for (b, a) in &self.terms {
            let mut m = a.clone();
            for i in 0..self.dim {
                for j in 0..self.dim {
                    // Structural zeros stay exactly zero: with steeply
                    // geometric weights the ratio d_i/d_j can overflow, and
                    // 0 · inf would otherwise turn them into NaN.
                    if m[(i, j)] != 0.0 {
                        m[(i, j)] *= d[i] / d[j];
                    }
                }
            }
            terms.push((*b, m));
        }
        Self {
            dim: self.dim,
            terms,
        }
    }

    /// Column sums at time `t`.
    pub fn column_sums(&self, t: f64) -> Vec<f64> {
        let m = self.eval(t);
        (0..self.dim).map(|j| m.column(j).sum()).collect()
    }
}

/// Diagonal similarity weights `{d_i}` for the reduced coordinates
/// `1..S`; signed only in the differential-inequality method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub d: Vec<f64>,
    pub signed: bool,
}

impl WeightVector {
    pub fn unsigned(d: Vec<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|x| *x <= 0.0 || !x.is_finite()) {
            return Err(Error::InvalidWeights(format!(
                "d[{i}] = {} must be positive",
                d[i]
            )));
        }
        Ok(Self { d, signed: false })
    }

    pub fn signed(d: Vec<f64>) -> Result<Self> {
        if let Some(i) = d.iter().position(|x| *x == 0.0 || !x.is_finite()) {
            return Err(Error::InvalidWeights(format!(
                "d[{i}] = {} must be nonzero",
                d[i]
            )));
        }
        Ok(Self { d, signed: true })
    }

    pub fn ones(s: usize) -> Self {
        Self {
            d: vec![1.0; s],
            signed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Transposed intensity matrix `A(t)` on states `0..=S`: `a_{ij} = q_{ji}`
/// with zero column sums.
pub fn build_a(model: &ChainModel) -> Result<MatrixFn> {
    model.check_valid()?;
    let n = model.size + 1;
    let mut a = MatrixFn::zeros(n);
    for (from, to, rate) in model.transitions() {
        a.add_rate(to, from, &rate, 1.0);
        a.add_rate(from, from, &rate, -1.0);
    }
    Ok(a)
}

/// Reduced matrix `B(t)` on coordinates `1..S`:
/// `B_{ij} = A_{ij} - A_{i0}`.
pub fn build_b(model: &ChainModel) -> Result<MatrixFn> {
    let a = build_a(model)?;
    let s = model.size;
    let mut b = MatrixFn::zeros(s);
    for (basis, m) in a.terms() {
        let mut bm = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in 0..s {
                bm[(i, j)] = m[(i + 1, j + 1)] - m[(i + 1, 0)];
            }
        }
        if bm.iter().any(|x| *x != 0.0) {
            b.terms.push((*basis, bm));
        }
    }
    Ok(b)
}

/// The all-ones upper-triangular transform and its inverse.
/// `T⁻¹` has 1 on the diagonal and -1 on the superdiagonal; `T·T⁻¹ = I`
/// exactly.
pub fn transform_t(s: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(s >= 1);
    let mut t = DMatrix::zeros(s, s);
    let mut ti = DMatrix::zeros(s, s);
    for i in 0..s {
        for j in i..s {
            t[(i, j)] = 1.0;
        }
        ti[(i, i)] = 1.0;
        if i + 1 < s {
            ti[(i, i + 1)] = -1.0;
        }
    }
    (t, ti)
}

/// `B*(t) = T B(t) T⁻¹`.
pub fn build_bstar(model: &ChainModel) -> Result<MatrixFn> {
    let b = build_b(model)?;
    let (t, ti) = transform_t(model.size);
    Ok(b.conjugate(&t, &ti))
}

/// `B**(t) = D B*(t) D⁻¹` with positive weights.
pub fn weight_conjugate(bstar: &MatrixFn, d: &WeightVector) -> Result<MatrixFn> {
    if d.signed {
        return Err(Error::InvalidWeights(
            "signed weights belong to the differential-inequality method".into(),
        ));
    }
    if d.len() != bstar.dim() {
        return Err(Error::InvalidWeights(format!(
            "weight length {} does not match dimension {}",
            d.len(),
            bstar.dim()
        )));
    }
    if let Some(i) = d.d.iter().position(|x| *x == 0.0) {
        return Err(Error::InvalidWeights(format!("d[{i}] is zero")));
    }
    Ok(bstar.diag_similarity(&d.d))
}

/// True iff all off-diagonal entries are `≥ -1e-12` at every grid point.
pub fn is_essentially_nonnegative(m: &MatrixFn, grid: &[f64]) -> bool {
    grid.iter().all(|&t| {
        let mt = m.eval(t);
        (0..m.dim())
            .all(|i| (0..m.dim()).all(|j| i == j || mt[(i, j)] >= -1e-12))
    })
}

/// Uniform grid of `n` points over one period `[0, 1]`.
pub fn period_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChainClass;
    use std::collections::BTreeMap;

    fn bd_s1(lam0: f64, mu1: f64) -> ChainModel {
        ChainModel {
            class: ChainClass::BirthDeath,
            size: 1,
            truncation_of_infinite: false,
            birth: [(0, RateFunction::constant(lam0))].into(),
            death: [(1, RateFunction::constant(mu1))].into(),
            arrival_batch: BTreeMap::new(),
            service_batch: BTreeMap::new(),
        }
    }

    #[test]
    fn build_a_two_state() {
        let a = build_a(&bd_s1(2.0, 3.0)).unwrap().eval(0.0);
        assert_eq!(a[(0, 0)], -2.0);
        assert_eq!(a[(0, 1)], 3.0);
        assert_eq!(a[(1, 0)], 2.0);
        assert_eq!(a[(1, 1)], -3.0);
    }

    #[test]
    fn column_sums_vanish() {
        let m = ChainModel {
            class: ChainClass::BatchBoth,
            size: 4,
            truncation_of_infinite: false,
            birth: BTreeMap::new(),
            death: BTreeMap::new(),
            arrival_batch: [
                (1, RateFunction::constant(1.0)),
                (3, RateFunction::constant(0.5)),
            ]
            .into(),
            service_batch: [(2, RateFunction::constant(2.0))].into(),
        };
        let a = build_a(&m).unwrap();
        for i in 0..7 {
            let t = 0.173 * i as f64;
            for c in a.column_sums(t) {
                assert!(c.abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn batch_service_transpose_entry() {
        // BatchService S=2, λ=1 on states 0 and 1, b_2=μ only:
        // q_{20} = μ appears in A as a_{02}.
        let m = ChainModel {
            class: ChainClass::BatchService,
            size: 2,
            truncation_of_infinite: false,
            birth: [
                (0, RateFunction::constant(1.0)),
                (1, RateFunction::constant(1.0)),
            ]
            .into(),
            death: BTreeMap::new(),
            arrival_batch: BTreeMap::new(),
            service_batch: [(2, RateFunction::constant(7.0))].into(),
        };
        let a = build_a(&m).unwrap().eval(0.0);
        assert_eq!(a[(0, 2)], 7.0);
    }

    #[test]
    fn reduced_matrix_two_state() {
        let b = build_b(&bd_s1(2.0, 3.0)).unwrap().eval(0.0);
        assert_eq!(b[(0, 0)], -5.0);
    }

    #[test]
    fn transform_properties() {
        for s in [2usize, 3, 6] {
            let (t, ti) = transform_t(s);
            let prod = &t * &ti;
            assert_eq!(prod, DMatrix::identity(s, s));
            for i in 0..s {
                assert_eq!(t.row(i).sum(), (s - i) as f64);
            }
        }
    }

    #[test]
    fn identity_weights_leave_bstar() {
        let m = bd_s1(2.0, 3.0);
        let bs = build_bstar(&m).unwrap();
        let bss = weight_conjugate(&bs, &WeightVector::ones(1)).unwrap();
        assert_eq!(bs.eval(0.3), bss.eval(0.3));
    }

    #[test]
    fn essential_nonnegativity_by_class() {
        // class (i): always essentially non-negative
        let m = ChainModel {
            class: ChainClass::BirthDeath,
            size: 3,
            truncation_of_infinite: false,
            birth: (0..3).map(|i| (i, RateFunction::constant(1.0 + i as f64))).collect(),
            death: (1..=3).map(|i| (i, RateFunction::constant(2.0))).collect(),
            arrival_batch: BTreeMap::new(),
            service_batch: BTreeMap::new(),
        };
        let grid = period_grid(11);
        assert!(is_essentially_nonnegative(&build_bstar(&m).unwrap(), &grid));

        // class (ii) with a_k increasing in k: not essentially non-negative
        let m2 = ChainModel {
            class: ChainClass::BatchArrival,
            size: 3,
            truncation_of_infinite: false,
            birth: BTreeMap::new(),
            death: (1..=3).map(|i| (i, RateFunction::constant(1.0))).collect(),
            arrival_batch: [
                (1, RateFunction::constant(1.0)),
                (2, RateFunction::constant(2.0)),
                (3, RateFunction::constant(3.0)),
            ]
            .into(),
            service_batch: BTreeMap::new(),
        };
        assert!(!is_essentially_nonnegative(&build_bstar(&m2).unwrap(), &grid));

        // class (iii) with non-increasing b_k: essentially non-negative
        let m3 = ChainModel {
            class: ChainClass::BatchService,
            size: 3,
            truncation_of_infinite: false,
            birth: (0..3).map(|i| (i, RateFunction::constant(1.0))).collect(),
            death: BTreeMap::new(),
            arrival_batch: BTreeMap::new(),
            service_batch: [
                (1, RateFunction::constant(3.0)),
                (2, RateFunction::constant(2.0)),
                (3, RateFunction::constant(1.0)),
            ]
            .into(),
        };
        assert!(is_essentially_nonnegative(&build_bstar(&m3).unwrap(), &grid));
    }
}
