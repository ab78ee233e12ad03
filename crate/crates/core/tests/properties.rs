//! Randomized invariants: serialization round-trips, rate-function
//! calculus, template-exponent structure, and model hashing.

mod common;

use proptest::prelude::*;

use common::*;
use ctmc_bounds::bound::model_hash;
use ctmc_bounds::diffineq::{template_weights, SignPattern};
use ctmc_bounds::model::{ChainModel, Harmonic, RateFunction};

fn rate_strategy() -> impl Strategy<Value = RateFunction> {
    (1.0f64..10.0, -0.4f64..0.4, -0.4f64..0.4).prop_map(|(c, s1, c1)| {
        RateFunction::new(
            c,
            vec![Harmonic {
                k: 1,
                sin: s1 * c,
                cos: c1 * c,
            }],
        )
    })
}

fn model_strategy() -> impl Strategy<Value = ChainModel> {
    (
        2usize..8,
        proptest::collection::vec(rate_strategy(), 8),
        proptest::collection::vec(rate_strategy(), 8),
    )
        .prop_map(|(s, lams, mus)| bd_model(&lams[..s], &mus[..s]))
}

proptest! {
    #[test]
    fn model_json_round_trip(model in model_strategy()) {
        let json = serde_json::to_string(&model).unwrap();
        let back: ChainModel = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&model, &back);
        prop_assert!(back.check_valid().is_ok());
    }

    #[test]
    fn rate_integral_is_consistent(f in rate_strategy(), t in 0.0f64..4.0) {
        // periodic part integrates to zero over a full period
        prop_assert!((f.integral(t + 1.0) - f.integral(t) - f.mean()).abs() < 1e-10);
        // closed-form integral against midpoint quadrature
        let n = 20_000;
        let h = t / n as f64;
        let quad: f64 = (0..n).map(|i| f.eval((i as f64 + 0.5) * h) * h).sum();
        prop_assert!((f.integral(t) - quad).abs() < 1e-6 * (1.0 + quad.abs()));
    }

    #[test]
    fn template_exponents_are_a_permutation(mask in 0u32..(1 << 9), s in 2usize..10) {
        let mut signs = vec![1i8; s];
        for i in 1..s {
            if mask >> (i - 1) & 1 == 1 {
                signs[i] = -1;
            }
        }
        let eps = 0.5;
        let d = template_weights(&SignPattern { signs }, eps).unwrap();
        let mut exponents: Vec<i64> = d
            .d
            .iter()
            .map(|x| (x.abs().ln() / eps.ln()).round() as i64)
            .collect();
        exponents.sort_unstable();
        let expect: Vec<i64> = (1..=s as i64).collect();
        prop_assert_eq!(exponents, expect);
    }

    #[test]
    fn model_hash_tracks_content(model in model_strategy()) {
        let h1 = model_hash(&model);
        prop_assert_eq!(&h1, &model_hash(&model.clone()));
        let mut other = model.clone();
        let f = other.birth.get_mut(&0).unwrap();
        *f = f.scaled(1.0 + 1e-9);
        prop_assert_ne!(h1, model_hash(&other));
    }
}
