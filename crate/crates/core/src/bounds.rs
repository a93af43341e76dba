//! Explicit normal-approximation bounds for the combinatorial statistic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::comb::{require_min_n, stein_lambda, variance_decomposition_with, EyrEstimate, EyrMethod};
use crate::distance::{
    exact_distances, kolmogorov_empirical, wasserstein_empirical, DistanceEstimate,
};
use crate::error::{Error, Result};
use crate::ewens::{falling_factorial, sample_crp, EwensParams};
use crate::matrix::{RawMatrix, ScoreMatrix};
use crate::oracle::{exact_statistic_law_with, ENUMERATION_CAP};
use crate::par::{monte_carlo_blocks, Execution};

/// 1 + 1/√(2π) + √(2π)/4.
pub fn kolmogorov_factor() -> f64 {
    let root = (2.0 * PI).sqrt();
    1.0 + 1.0 / root + root / 4.0
}

fn ratio(params: &EwensParams, m: usize) -> f64 {
    params.theta.powi(m as i32) * falling_factorial(params.n as f64, m)
        / falling_factorial(params.shifted(), m)
}

/// √(E c₁²).
pub fn kappa1(params: &EwensParams) -> f64 {
    (ratio(params, 2) + ratio(params, 1)).sqrt()
}

/// √(E c₁²(c₁ − 1)²).
pub fn kappa2(params: &EwensParams) -> f64 {
    (ratio(params, 4) + 4.0 * ratio(params, 3) + 2.0 * ratio(params, 2)).sqrt()
}

fn check_m(m: f64) -> Result<()> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("M must be nonnegative (got {m})")));
    }
    Ok(())
}

/// Numerator of the L¹ bound.
pub fn alpha1(params: &EwensParams, m: f64) -> Result<f64> {
    require_min_n(params.n)?;
    check_m(m)?;
    let theta = params.theta;
    let n = params.n as f64;
    let s = params.shifted();
    let c = (2.0 / PI).sqrt();
    let (k1, k2) = (kappa1(params), kappa2(params));
    Ok(40.0 * m
        + k1 * c * m * (3.0 + (theta + 1.0) / (n - 1.0))
        + k2 * c * m / (n - 1.0)
        + theta
            * m
            * (1.2 * c
                + 1.2 * (6.0 * n + 4.0 * theta - 5.0) / s
                + theta * n / falling_factorial(s, 2)))
}

/// Numerator of the L∞ bound.
pub fn alpha2(params: &EwensParams, m: f64) -> Result<f64> {
    require_min_n(params.n)?;
    check_m(m)?;
    let theta = params.theta;
    let n = params.n as f64;
    let s = params.shifted();
    let root = (2.0 * PI).sqrt();
    let (k1, k2) = (kappa1(params), kappa2(params));
    Ok(20.0 * kolmogorov_factor() * m
        + k1 * m * (3.0 + (theta + 1.0) / (n - 1.0))
        + k2 * m / (n - 1.0)
        + theta
            * m
            * (1.2
                + 0.15 * root * (6.0 * n + 4.0 * theta - 5.0) / s
                + 0.125 * root * theta * n / falling_factorial(s, 2)))
}

/// Value of [`alpha1`] and [`alpha2`] as θ → 0.
pub fn alpha_limits_at_zero(m: f64) -> (f64, f64) {
    (40.0 * m, 20.0 * kolmogorov_factor() * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    L1,
    Linf,
}

/// Distance bound from an approximate zero-bias coupling. `gap` is
/// E|Y* − Y′| for L¹ and the almost-sure bound δ on |Y* − Y′| for L∞;
/// `e_yr` and `e_abs_r` are |E Y′R| and E|R|.
pub fn generic_zero_bias_bounds(
    sigma: f64,
    lambda: f64,
    gap: f64,
    e_yr: f64,
    e_abs_r: f64,
    mode: BoundMode,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive (got {sigma})")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda must lie in (0, 1) (got {lambda})")));
    }
    if !(gap >= 0.0 && e_yr >= 0.0 && e_abs_r >= 0.0) {
        return Err(Error::InvalidParameter(
            "gap and remainder terms must be nonnegative".into(),
        ));
    }
    Ok(match mode {
        BoundMode::L1 => {
            2.0 * gap / sigma
                + (2.0 / PI).sqrt() * e_yr / (sigma * sigma * lambda)
                + 2.0 * e_abs_r / (sigma * lambda)
        }
        BoundMode::Linf => {
            gap * kolmogorov_factor() / sigma
                + e_yr / (sigma * sigma * lambda)
                + (2.0 * PI).sqrt() * e_abs_r / (4.0 * sigma * lambda)
        }
    })
}

/// Remainder bounds in the coarsened form whose substitution into
/// [`generic_zero_bias_bounds`] (λ = 4/n, gap 20M) gives exactly α₁/σ and
/// α₂/σ. Returns `(|E Y′R| bound, E|R| bound)`; each dominates the sharper
/// bound from [`crate::comb::remainder_bounds`] when n ≥ 6.
pub fn rounded_remainder_bounds(params: &EwensParams, m: f64, sigma: f64) -> Result<(f64, f64)> {
    require_min_n(params.n)?;
    let theta = params.theta;
    let n = params.n as f64;
    let s = params.shifted();
    let lambda = stein_lambda(params.n);
    let (k1, k2) = (kappa1(params), kappa2(params));
    let e_yr = (3.0 * k1 + 1.2 * theta + (k1 * (theta + 1.0) + k2) / (n - 1.0)) * m * sigma * lambda;
    let e_abs_r = (0.6 * theta * (6.0 * n + 4.0 * theta - 5.0) / s
        + 0.5 * theta * theta * n / falling_factorial(s, 2))
        * m
        * lambda;
    Ok((e_yr, e_abs_r))
}

/// Lower bound on the Kolmogorov distance for integer-valued scores.
pub fn integer_lower_bound(sigma: f64) -> f64 {
    1.0 / (6.0 * 3f64.sqrt() * sigma + 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub eyr: EyrMethod,
    /// Draws for empirical distances; `None` skips them.
    pub empirical_samples: Option<usize>,
    pub seed: u64,
    /// Also compute exact distances by enumeration (n ≤ 8).
    pub exact: bool,
    pub force_integer_lower_bound: bool,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            eyr: EyrMethod::Auto {
                samples: 100_000,
                seed: 0,
            },
            empirical_samples: None,
            seed: 0,
            exact: false,
            force_integer_lower_bound: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sigma_method: EyrEstimate,
    pub seed: u64,
    pub samples: Option<usize>,
    /// Stream offset used for the empirical distance draws.
    pub empirical_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub theta: f64,
    pub sigma: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub d1_upper: f64,
    pub dinf_upper: f64,
    pub dinf_lower: Option<f64>,
    pub d1_exact: Option<f64>,
    pub dinf_exact: Option<f64>,
    pub d1_empirical: Option<DistanceEstimate>,
    pub dinf_empirical: Option<DistanceEstimate>,
    pub raw_mean: f64,
    pub provenance: Provenance,
}

/// Empirical draws live on streams far from the ones used for σ.
pub const EMPIRICAL_STREAM_OFFSET: u64 = 1 << 40;

pub const CSV_HEADER: &str =
    "n,theta,sigma,M,kappa1,kappa2,alpha1,alpha2,d1_upper,dinf_upper,dinf_lower,d1_emp,dinf_emp,samples,seed";

fn opt<T: std::fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl BoundReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.theta,
            self.sigma,
            self.m,
            self.kappa1,
            self.kappa2,
            self.alpha1,
            self.alpha2,
            self.d1_upper,
            self.dinf_upper,
            opt(self.dinf_lower),
            opt(self.d1_empirical.map(|d| d.value)),
            opt(self.dinf_empirical.map(|d| d.value)),
            opt(self.provenance.samples),
            self.provenance.seed
        )
    }
}

/// Standardized draws W = (Y − E Y)/σ.
pub fn sample_standardized(
    exec: Execution,
    a: &ScoreMatrix,
    params: &EwensParams,
    sigma: f64,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    monte_carlo_blocks(exec, samples, seed, EMPIRICAL_STREAM_OFFSET, |rng, count| {
        (0..count)
            .map(|_| a.statistic(&sample_crp(params, rng)) / sigma)
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Center, decompose the variance, evaluate the constants, and optionally
/// measure the actual distances.
pub fn bound_report(
    raw: &RawMatrix,
    params: &EwensParams,
    options: &BoundOptions,
) -> Result<BoundReport> {
    bound_report_with(Execution::default(), raw, params, options)
}

pub fn bound_report_with(
    exec: Execution,
    raw: &RawMatrix,
    params: &EwensParams,
    options: &BoundOptions,
) -> Result<BoundReport> {
    require_min_n(params.n)?;
    let a = ScoreMatrix::center(raw, params)?;
    let decomposition = variance_decomposition_with(exec, &a, params, options.eyr)?;
    let sigma = decomposition.sigma();
    let m = a.max_abs();
    let alpha1 = alpha1(params, m)?;
    let alpha2 = alpha2(params, m)?;
    let integer = a.is_integer() || options.force_integer_lower_bound;

    let (d1_exact, dinf_exact) = if options.exact {
        if params.n > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n: params.n,
                cap: ENUMERATION_CAP,
            });
        }
        let law = exact_statistic_law_with(exec, &a, params)?;
        let (d1, dinf) = exact_distances(&law, a.raw_mean(), sigma)?;
        (Some(d1), Some(dinf))
    } else {
        (None, None)
    };

    let (d1_empirical, dinf_empirical) = match options.empirical_samples {
        Some(samples) => {
            let w = sample_standardized(exec, &a, params, sigma, samples, options.seed);
            (
                Some(wasserstein_empirical(&w)?.with_seed(options.seed)),
                Some(kolmogorov_empirical(&w)?.with_seed(options.seed)),
            )
        }
        None => (None, None),
    };

    Ok(BoundReport {
        n: params.n,
        theta: params.theta,
        sigma,
        m,
        kappa1: kappa1(params),
        kappa2: kappa2(params),
        alpha1,
        alpha2,
        d1_upper: alpha1 / sigma,
        dinf_upper: alpha2 / sigma,
        dinf_lower: integer.then(|| integer_lower_bound(sigma)),
        d1_exact,
        dinf_exact,
        d1_empirical,
        dinf_empirical,
        raw_mean: a.raw_mean(),
        provenance: Provenance {
            sigma_method: decomposition.e_yr,
            seed: options.seed,
            samples: options.empirical_samples,
            empirical_stream: EMPIRICAL_STREAM_OFFSET,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comb::remainder_bounds;

    fn params(theta: f64, n: usize) -> EwensParams {
        EwensParams::new(theta, n).unwrap()
    }

    #[test]
    fn uniform_kappas() {
        for n in [6usize, 7, 50, 1000] {
            assert!((kappa1(&params(1.0, n)) - 2f64.sqrt()).abs() < 1e-14);
            assert!((kappa2(&params(1.0, n)) - 7f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn kappa_large_n_limits() {
        let theta = 2.5;
        let p = params(theta, 1_000_000);
        assert!((kappa1(&p) - (theta * theta + theta).sqrt()).abs() < 1e-4);
        let lim2 = (theta.powi(4) + 4.0 * theta.powi(3) + 2.0 * theta * theta).sqrt();
        assert!((kappa2(&p) - lim2).abs() < 1e-3);
    }

    #[test]
    fn alphas_vanish_with_m() {
        assert_eq!(alpha1(&params(2.0, 10), 0.0).unwrap(), 0.0);
        assert_eq!(alpha2(&params(2.0, 10), 0.0).unwrap(), 0.0);
        assert_eq!(alpha1(&params(2.0, 5), 1.0).unwrap_err(), Error::TooSmall(5));
    }

    #[test]
    fn rounded_remainders_reproduce_alphas() {
        for &theta in &[0.2, 1.0, 3.0] {
            for n in [6usize, 11, 400] {
                let p = params(theta, n);
                let (m, sigma) = (0.7, 2.3);
                let (e_yr, e_abs_r) = rounded_remainder_bounds(&p, m, sigma).unwrap();
                let lambda = stein_lambda(n);
                let l1 = generic_zero_bias_bounds(sigma, lambda, 20.0 * m, e_yr, e_abs_r, BoundMode::L1)
                    .unwrap();
                let linf =
                    generic_zero_bias_bounds(sigma, lambda, 20.0 * m, e_yr, e_abs_r, BoundMode::Linf)
                        .unwrap();
                let a1 = alpha1(&p, m).unwrap() / sigma;
                let a2 = alpha2(&p, m).unwrap() / sigma;
                assert!((l1 - a1).abs() <= 1e-12 * a1, "{l1} vs {a1}");
                assert!((linf - a2).abs() <= 1e-12 * a2, "{linf} vs {a2}");
                let (sharp_abs_r, sharp_yr) = remainder_bounds(&p, m, sigma).unwrap();
                assert!(sharp_abs_r <= e_abs_r * (1.0 + 1e-12));
                assert!(sharp_yr <= e_yr * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn zero_remainders_reduce_to_plain_zero_bias() {
        let (sigma, gap) = (1.7, 0.4);
        assert_eq!(
            generic_zero_bias_bounds(sigma, 0.5, gap, 0.0, 0.0, BoundMode::L1).unwrap(),
            2.0 * gap / sigma
        );
        assert_eq!(
            generic_zero_bias_bounds(sigma, 0.5, gap, 0.0, 0.0, BoundMode::Linf).unwrap(),
            kolmogorov_factor() * gap / sigma
        );
        assert_eq!(
            generic_zero_bias_bounds(sigma, 0.5, 0.0, 0.0, 0.0, BoundMode::L1).unwrap(),
            0.0
        );
        assert!(generic_zero_bias_bounds(0.0, 0.5, 0.0, 0.0, 0.0, BoundMode::L1).is_err());
        assert!(generic_zero_bias_bounds(1.0, 1.0, 0.0, 0.0, 0.0, BoundMode::L1).is_err());
    }

    #[test]
    fn csv_row_has_all_columns() {
        let raw = RawMatrix::from_fn(6, |i, j| ((i + 1) * (j + 1) % 5) as f64);
        let report = bound_report(&raw, &params(1.0, 6), &BoundOptions::default()).unwrap();
        assert_eq!(report.csv_row().split(',').count(), CSV_HEADER.split(',').count());
        assert!(report.dinf_lower.is_some());
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("M").is_some());
    }
}
