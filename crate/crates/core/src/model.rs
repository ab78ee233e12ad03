//! Time-varying transition intensities and the four structural chain
//! classes.
//!
//! Every intensity is a trigonometric polynomial with base period 1,
//!
//! ```text
//! f(t) = c + Σ_k [ s_k sin(2πkt) + c_k cos(2πkt) ]
//! ```
//!
//! which covers all rates used in practice, keeps integrals closed-form,
//! and makes the per-period mean equal to the constant term.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::de::{SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Number of grid points used for the nonnegativity check over one period.
pub const NONNEG_GRID: usize = 10_001;

/// One harmonic of a [`RateFunction`]: frequency index `k` with sine and
/// cosine coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    pub k: u32,
    pub sin: f64,
    pub cos: f64,
}

/// A nonnegative trigonometric polynomial of time; the representation of
/// every transition intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    constant: f64,
    harmonics: Vec<Harmonic>,
}

impl RateFunction {
    pub fn new(constant: f64, harmonics: Vec<Harmonic>) -> Self {
        let harmonics = harmonics
            .into_iter()
            .filter(|h| h.sin != 0.0 || h.cos != 0.0)
            .collect();
        Self {
            constant,
            harmonics,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            harmonics: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    pub fn is_constant(&self) -> bool {
        self.harmonics.is_empty()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.constant;
        for h in &self.harmonics {
            let w = TAU * h.k as f64 * t;
            v += h.sin * w.sin() + h.cos * w.cos();
        }
        v
    }

    /// Mean over one period: the harmonics integrate to zero.
    pub fn mean(&self) -> f64 {
        self.constant
    }

    /// Exact integral over `[0, t]`.
    pub fn integral(&self, t: f64) -> f64 {
        let mut v = self.constant * t;
        for h in &self.harmonics {
            let om = TAU * h.k as f64;
            let w = om * t;
            v += h.sin * (1.0 - w.cos()) / om + h.cos * w.sin() / om;
        }
        v
    }

    /// Pointwise scaling by a constant factor.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            constant: self.constant * factor,
            harmonics: self
                .harmonics
                .iter()
                .map(|h| Harmonic {
                    k: h.k,
                    sin: h.sin * factor,
                    cos: h.cos * factor,
                })
                .collect(),
        }
    }

    /// Pointwise sum of two rate functions.
    pub fn plus(&self, other: &Self) -> Self {
        let mut by_k: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for h in self.harmonics.iter().chain(other.harmonics.iter()) {
            let e = by_k.entry(h.k).or_insert((0.0, 0.0));
            e.0 += h.sin;
            e.1 += h.cos;
        }
        Self::new(
            self.constant + other.constant,
            by_k.into_iter()
                .map(|(k, (sin, cos))| Harmonic { k, sin, cos })
                .collect(),
        )
    }

    /// Largest frequency index present.
    pub fn max_harmonic(&self) -> u32 {
        self.harmonics.iter().map(|h| h.k).max().unwrap_or(0)
    }

    /// Crude upper bound on sup_t |f(t)|.
    pub fn sup_bound(&self) -> f64 {
        self.constant.abs()
            + self
                .harmonics
                .iter()
                .map(|h| h.sin.abs() + h.cos.abs())
                .sum::<f64>()
    }

    /// Nonnegativity on a dense grid of one period, tolerance `-1e-12`.
    pub fn is_nonnegative(&self) -> bool {
        if self.is_constant() {
            return self.constant >= -1e-12;
        }
        (0..NONNEG_GRID).all(|i| self.eval(i as f64 / (NONNEG_GRID - 1) as f64) >= -1e-12)
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
            && self
                .harmonics
                .iter()
                .all(|h| h.sin.is_finite() && h.cos.is_finite())
    }
}

// Wire form: [c, [k, sin, cos], ...]
impl Serialize for RateFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(1 + self.harmonics.len()))?;
        seq.serialize_element(&self.constant)?;
        for h in &self.harmonics {
            seq.serialize_element(&(h.k, h.sin, h.cos))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for RateFunction {
    fn deserialize<D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        struct RateVisitor;
        impl<'de> Visitor<'de> for RateVisitor {
            type Value = RateFunction;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a sequence [constant, [k, sin, cos], ...]")
            }

            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let constant: f64 = seq
                    .next_element()?
                    .ok_or_else(|| serde::de::Error::custom("missing constant term"))?;
                let mut harmonics = Vec::new();
                while let Some((k, sin, cos)) = seq.next_element::<(u32, f64, f64)>()? {
                    harmonics.push(Harmonic { k, sin, cos });
                }
                Ok(RateFunction::new(constant, harmonics))
            }
        }
        deserializer.deserialize_seq(RateVisitor)
    }
}

/// The four transition-structure classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainClass {
    /// (i) birth-death: single steps, state-dependent rates.
    BirthDeath,
    /// (ii) batch arrivals (state-independent), single services.
    BatchArrival,
    /// (iii) single arrivals, batch services (state-independent).
    BatchService,
    /// (iv) batch arrivals and batch services, both state-independent.
    BatchBoth,
}

/// A finite chain on states `{0, …, S}` with class-specific rate maps.
///
/// `birth[i]` is the single-arrival rate λ_i out of state `i` (classes
/// i/iii), `death[i]` the single-service rate μ_i out of state `i`
/// (classes i/ii), `arrival_batch[k]` the batch-arrival rate a_k and
/// `service_batch[k]` the batch-service rate b_k (batch classes). Batch
/// transitions that would leave `{0, …, S}` are dropped; `truncated`
/// records that `S` is a truncation level of a countable model rather
/// than a true boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub class: ChainClass,
    #[serde(rename = "S")]
    pub size: usize,
    #[serde(default, rename = "truncated")]
    pub truncation_of_infinite: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub birth: BTreeMap<usize, RateFunction>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub death: BTreeMap<usize, RateFunction>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub arrival_batch: BTreeMap<usize, RateFunction>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub service_batch: BTreeMap<usize, RateFunction>,
}

impl ChainModel {
    /// Report-style validation: returns the list of violated invariants.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.size == 0 {
            v.push("S must be at least 1".into());
            return v;
        }
        let s = self.size;

        let uses_birth = matches!(self.class, ChainClass::BirthDeath | ChainClass::BatchService);
        let uses_death = matches!(self.class, ChainClass::BirthDeath | ChainClass::BatchArrival);
        let uses_arr = matches!(self.class, ChainClass::BatchArrival | ChainClass::BatchBoth);
        let uses_srv = matches!(self.class, ChainClass::BatchService | ChainClass::BatchBoth);

        if !uses_birth && !self.birth.is_empty() {
            v.push("birth rates populated but not used by this class".into());
        }
        if !uses_death && !self.death.is_empty() {
            v.push("death rates populated but not used by this class".into());
        }
        if !uses_arr && !self.arrival_batch.is_empty() {
            v.push("arrival_batch rates populated but not used by this class".into());
        }
        if !uses_srv && !self.service_batch.is_empty() {
            v.push("service_batch rates populated but not used by this class".into());
        }

        for (i, _) in &self.birth {
            if *i >= s {
                v.push(format!("birth rate index {i} outside 0..{}", s - 1));
            }
        }
        for (i, _) in &self.death {
            if *i == 0 || *i > s {
                v.push(format!("death rate index {i} outside 1..{s}"));
            }
        }
        for (k, _) in self.arrival_batch.iter().chain(self.service_batch.iter()) {
            if *k == 0 || *k > s {
                v.push(format!("batch size {k} exceeds S = {s}"));
            }
        }

        let mut total_sup = 0.0_f64;
        for (name, map) in [
            ("birth", &self.birth),
            ("death", &self.death),
            ("arrival_batch", &self.arrival_batch),
            ("service_batch", &self.service_batch),
        ] {
            for (idx, f) in map {
                if !f.is_finite() {
                    v.push(format!("{name}[{idx}]: non-finite coefficient"));
                } else if !f.is_nonnegative() {
                    v.push(format!("{name}[{idx}]: negative intensity"));
                }
                total_sup += f.sup_bound();
            }
        }
        if !total_sup.is_finite() {
            v.push("total intensity supremum is not finite".into());
        }
        v
    }

    pub fn check_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// True when every populated rate is constant in time.
    pub fn is_homogeneous(&self) -> bool {
        self.birth
            .values()
            .chain(self.death.values())
            .chain(self.arrival_batch.values())
            .chain(self.service_batch.values())
            .all(RateFunction::is_constant)
    }

    pub fn birth_rate(&self, i: usize) -> Option<&RateFunction> {
        self.birth.get(&i)
    }

    pub fn death_rate(&self, i: usize) -> Option<&RateFunction> {
        self.death.get(&i)
    }

    /// Enumerates every transition `(from, to, rate)` of the finite chain.
    pub fn transitions(&self) -> Vec<(usize, usize, RateFunction)> {
        let s = self.size;
        let mut out = Vec::new();
        match self.class {
            ChainClass::BirthDeath => {
                for (i, f) in &self.birth {
                    if *i < s {
                        out.push((*i, i + 1, f.clone()));
                    }
                }
                for (i, f) in &self.death {
                    if *i >= 1 && *i <= s {
                        out.push((*i, i - 1, f.clone()));
                    }
                }
            }
            ChainClass::BatchArrival => {
                for i in 0..=s {
                    for (k, f) in &self.arrival_batch {
                        if i + k <= s {
                            out.push((i, i + k, f.clone()));
                        }
                    }
                }
                for (i, f) in &self.death {
                    if *i >= 1 && *i <= s {
                        out.push((*i, i - 1, f.clone()));
                    }
                }
            }
            ChainClass::BatchService => {
                for (i, f) in &self.birth {
                    if *i < s {
                        out.push((*i, i + 1, f.clone()));
                    }
                }
                for i in 1..=s {
                    for (k, f) in &self.service_batch {
                        if *k <= i {
                            out.push((i, i - k, f.clone()));
                        }
                    }
                }
            }
            ChainClass::BatchBoth => {
                for i in 0..=s {
                    for (k, f) in &self.arrival_batch {
                        if i + k <= s {
                            out.push((i, i + k, f.clone()));
                        }
                    }
                }
                for i in 1..=s {
                    for (k, f) in &self.service_batch {
                        if *k <= i {
                            out.push((i, i - k, f.clone()));
                        }
                    }
                }
            }
        }
        out
    }
}
