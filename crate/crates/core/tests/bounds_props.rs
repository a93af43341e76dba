mod common;

use common::{close, integer_symmetric, params, uniform_symmetric};
use ewens_stein::bounds::{alpha1, alpha2, bound_report, BoundOptions};
use ewens_stein::comb::EyrMethod;
use ewens_stein::{Error, RawMatrix};
use proptest::prelude::*;

fn exact_options() -> BoundOptions {
    BoundOptions {
        eyr: EyrMethod::Exact,
        exact: true,
        ..BoundOptions::default()
    }
}

#[test]
fn integer_chain_holds_at_seven() {
    let p = params(1.0, 7);
    for seed in 0..10u64 {
        let r = bound_report(&integer_symmetric(7, seed, 0, 9), &p, &exact_options()).unwrap();
        let lower = r.dinf_lower.unwrap();
        let exact = r.dinf_exact.unwrap();
        assert!(lower <= exact && exact <= r.dinf_upper, "{lower} {exact} {}", r.dinf_upper);
        assert!(r.d1_exact.unwrap() <= r.d1_upper);
        assert!(r.d1_upper <= 53.0 * r.m / r.sigma);
        assert!(r.dinf_upper <= 50.0 * r.m / r.sigma);
    }
}

#[test]
fn alphas_increase_in_theta() {
    let grid: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
    for pair in grid.windows(2) {
        let (lo, hi) = (params(pair[0], 20), params(pair[1], 20));
        assert!(alpha1(&lo, 1.0).unwrap() < alpha1(&hi, 1.0).unwrap());
        assert!(alpha2(&lo, 1.0).unwrap() < alpha2(&hi, 1.0).unwrap());
    }
}

#[test]
fn degenerate_and_small_inputs_are_rejected() {
    let zero = RawMatrix::constant(8, 0.0);
    assert!(matches!(
        bound_report(&zero, &params(1.0, 8), &BoundOptions::default()),
        Err(Error::DegenerateVariance(_))
    ));
    let small = uniform_symmetric(5, 1);
    let err = bound_report(&small, &params(1.0, 5), &BoundOptions::default()).unwrap_err();
    assert_eq!(err, Error::TooSmall(5));
    assert!(err.to_string().contains("n ≥ 6 required"));
}

#[test]
fn empirical_distances_stay_below_the_upper_bound() {
    let options = BoundOptions {
        empirical_samples: Some(100_000),
        seed: 11,
        ..BoundOptions::default()
    };
    let r = bound_report(&uniform_symmetric(50, 2), &params(2.0, 50), &options).unwrap();
    let d1 = r.d1_empirical.unwrap().value;
    let dinf = r.dinf_empirical.unwrap().value;
    assert!((0.0..=r.dinf_upper).contains(&dinf));
    assert!((0.0..=r.d1_upper).contains(&d1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reports_are_scale_equivariant(seed in 0u64..500, c in 0.05f64..20.0, theta in 0.3f64..3.0) {
        let raw = uniform_symmetric(9, seed);
        let p = params(theta, 9);
        let options = BoundOptions {
            eyr: EyrMethod::SecondMoment,
            empirical_samples: Some(2_000),
            seed,
            ..BoundOptions::default()
        };
        let base = bound_report(&raw, &p, &options).unwrap();
        let scaled = bound_report(&raw.scale(c), &p, &options).unwrap();
        prop_assert!(close(scaled.sigma, c * base.sigma, 1e-10, 0.0));
        prop_assert!(close(scaled.m, c * base.m, 1e-12, 0.0));
        prop_assert!(close(scaled.d1_upper, base.d1_upper, 1e-10, 0.0));
        prop_assert!(close(scaled.dinf_upper, base.dinf_upper, 1e-10, 0.0));
        let (e1, e2) = (base.d1_empirical.unwrap().value, scaled.d1_empirical.unwrap().value);
        prop_assert!((e1 - e2).abs() <= 1e-9);
        let (k1, k2) = (base.dinf_empirical.unwrap().value, scaled.dinf_empirical.unwrap().value);
        prop_assert!((k1 - k2).abs() <= 1e-9);
    }

    #[test]
    fn integer_lower_bound_never_exceeds_upper(seed in 0u64..500, theta in 0.2f64..4.0) {
        let raw = integer_symmetric(12, seed, -5, 5);
        let r = bound_report(&raw, &params(theta, 12), &BoundOptions {
            eyr: EyrMethod::SecondMoment,
            ..BoundOptions::default()
        }).unwrap();
        prop_assert!(r.dinf_lower.unwrap() <= r.dinf_upper);
    }
}
