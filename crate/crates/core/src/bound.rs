//! Convergence certificates shared by the three bounding methods.
//!
//! A certificate asserts, for the weighted reduced coordinates `w(t)` of
//! a solution difference,
//!
//! ```text
//! ‖w(t)‖ ≤ C · exp(−∫_s^t rate(u) du) · ‖w(s)‖,   t ≥ s,
//! ```
//!
//! in the stated norm. The rate is either a scalar, a trigonometric
//! polynomial, or a sampled periodic function.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::matrices::WeightVector;
use crate::model::{ChainModel, RateFunction};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LogNorm,
    Lyapunov,
    DiffIneq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormTag {
    L1,
    L2,
}

/// A 1-periodic function stored by uniform samples over `[0, 1]`, with
/// linear interpolation between samples and trapezoidal integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFn {
    /// Samples at `t_i = i / (n-1)`, `i = 0..n`; first and last refer to
    /// the same phase, so callers should supply matching endpoints.
    pub samples: Vec<f64>,
}

impl SampledFn {
    pub fn new(samples: Vec<f64>) -> Self {
        assert!(samples.len() >= 2);
        Self { samples }
    }

    /// Samples `f` on a uniform `n`-point grid over one period.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        assert!(n >= 2);
        Self::new(
            (0..n)
                .map(|i| f(i as f64 / (n - 1) as f64))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Linear interpolation of the periodic extension.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.samples.len();
        let phase = t.rem_euclid(1.0);
        let x = phase * (n - 1) as f64;
        let i = (x.floor() as usize).min(n - 2);
        let frac = x - i as f64;
        self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
    }

    /// Trapezoidal integral over one period.
    pub fn period_integral(&self) -> f64 {
        let n = self.samples.len();
        let h = 1.0 / (n - 1) as f64;
        let mut s = 0.5 * (self.samples[0] + self.samples[n - 1]);
        for v in &self.samples[1..n - 1] {
            s += v;
        }
        s * h
    }

    pub fn mean(&self) -> f64 {
        self.period_integral()
    }

    /// Trapezoidal integral over `[0, t]`, `t ≥ 0`, using periodicity.
    pub fn integral(&self, t: f64) -> f64 {
        assert!(t >= -1e-12);
        let t = t.max(0.0);
        let full = t.floor();
        let mut v = full * self.period_integral();
        let rem = t - full;
        if rem > 0.0 {
            let n = self.samples.len();
            let h = 1.0 / (n - 1) as f64;
            let x = rem * (n - 1) as f64;
            let i = (x.floor() as usize).min(n - 2);
            for j in 0..i {
                v += 0.5 * (self.samples[j] + self.samples[j + 1]) * h;
            }
            // partial trapezoid on segment i
            let frac = x - i as f64;
            let a = self.samples[i];
            let b = self.eval(full + rem);
            v += 0.5 * (a + b) * frac * h;
        }
        v
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The convergence rate of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSpec {
    Constant { value: f64 },
    Trig { rate: RateFunction },
    Sampled { rate: SampledFn },
}

impl RateSpec {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            RateSpec::Constant { value } => *value,
            RateSpec::Trig { rate } => rate.eval(t),
            RateSpec::Sampled { rate } => rate.eval(t),
        }
    }

    /// Integral over `[0, t]`.
    pub fn integral(&self, t: f64) -> f64 {
        match self {
            RateSpec::Constant { value } => value * t,
            RateSpec::Trig { rate } => rate.integral(t),
            RateSpec::Sampled { rate } => rate.integral(t),
        }
    }

    /// Mean over one period.
    pub fn mean(&self) -> f64 {
        match self {
            RateSpec::Constant { value } => *value,
            RateSpec::Trig { rate } => rate.mean(),
            RateSpec::Sampled { rate } => rate.mean(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            RateSpec::Constant { value } => RateSpec::Constant {
                value: value * factor,
            },
            RateSpec::Trig { rate } => RateSpec::Trig {
                rate: rate.scaled(factor),
            },
            RateSpec::Sampled { rate } => RateSpec::Sampled {
                rate: SampledFn::new(rate.samples.iter().map(|v| v * factor).collect()),
            },
        }
    }
}

/// SHA-256 of the canonical JSON form of the model, hex-encoded.
pub fn model_hash(model: &ChainModel) -> String {
    let json = serde_json::to_string(model).expect("model serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// An exponential-decay certificate for the weighted reduced system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub schema_version: u32,
    pub method: Method,
    pub rate: RateSpec,
    /// Multiplicative constant C ≥ 1.
    pub constant: f64,
    pub norm: NormTag,
    pub weights: WeightVector,
    pub sharp: bool,
    /// Certificate valid for t ≥ valid_from.
    pub valid_from: f64,
    pub model_hash: String,
    /// Method-specific witnesses (squares decomposition, worst sign
    /// pattern, …) for third-party audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl BoundCertificate {
    /// The certified envelope `C · exp(−∫_s^t rate)` for `t ≥ s`.
    pub fn envelope(&self, t: f64) -> f64 {
        let s = self.valid_from;
        self.constant * (-(self.rate.integral(t) - self.rate.integral(s))).exp()
    }

    /// Positive per-period mean rate means `∫rate = +∞`: the divergence
    /// hypothesis of weak ergodicity.
    pub fn is_ergodic_by_this_method(&self) -> bool {
        self.rate.mean() > 0.0
    }
}
