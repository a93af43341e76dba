//! Wasserstein (L¹) and Kolmogorov (L∞) distances between a standardized
//! discrete law and the standard normal.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::oracle::DiscreteLaw;
use crate::par::{CompensatedSum, MomentAccumulator};

/// Minimum sample count for empirical estimates.
pub const MIN_EMPIRICAL_SAMPLES: usize = 1000;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).clamp(0.0, 1.0)
}

/// φ(x).
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ⁻¹(p) for p in (0, 1), polished with a Newton step.
pub fn normal_quantile(p: f64) -> f64 {
    let standard = Normal::standard();
    let mut x = standard.inverse_cdf(p);
    if x.is_finite() {
        let density = normal_pdf(x);
        if density > 0.0 {
            x -= (normal_cdf(x) - p) / density;
        }
    }
    x
}

/// ∫_{-∞}^t Φ, accurate for t ≤ 0.
fn lower_antiderivative(t: f64) -> f64 {
    t * normal_cdf(t) + normal_pdf(t)
}

/// ∫_t^∞ (1 − Φ), accurate for t ≥ 0.
fn upper_antiderivative(t: f64) -> f64 {
    normal_pdf(t) - t * normal_cdf(-t)
}

/// ∫_a^b |c − Φ(t)| dt over a piece on which the sign of c − Φ is constant
/// and which does not straddle zero.
fn piece(a: f64, b: f64, c: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if b <= 0.0 {
        let int_phi = lower_antiderivative(b) - lower_antiderivative(a);
        (c * (b - a) - int_phi).abs()
    } else {
        let int_tail = upper_antiderivative(a) - upper_antiderivative(b);
        (int_tail - (1.0 - c) * (b - a)).abs()
    }
}

/// ∫_a^b |c − Φ(t)| dt for finite a < b and c ∈ [0, 1].
fn segment(a: f64, b: f64, c: f64) -> f64 {
    let mut cuts = vec![a];
    if a < 0.0 && 0.0 < b {
        cuts.push(0.0);
    }
    if c > 0.0 && c < 1.0 {
        let crossing = normal_quantile(c);
        if a < crossing && crossing < b {
            cuts.push(crossing);
        }
    }
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2).map(|w| piece(w[0], w[1], c)).sum()
}

/// ∫_{-∞}^t Φ for any t.
fn left_tail(t: f64) -> f64 {
    if t <= 0.0 {
        lower_antiderivative(t)
    } else {
        t + upper_antiderivative(t)
    }
}

/// ∫_t^∞ (1 − Φ) for any t.
fn right_tail(t: f64) -> f64 {
    if t >= 0.0 {
        upper_antiderivative(t)
    } else {
        lower_antiderivative(t) - t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DistanceMethod {
    Exact,
    Empirical { samples: usize, seed: Option<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub metric: Metric,
    pub value: f64,
    pub method: DistanceMethod,
    /// DKW 95% half-width for L∞; a heuristic standard error for L¹.
    pub ci_halfwidth: Option<f64>,
}

impl DistanceEstimate {
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let DistanceMethod::Empirical { seed: s, .. } = &mut self.method {
            *s = Some(seed);
        }
        self
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive (got {sigma})"
        )));
    }
    Ok(())
}

/// Standardized atoms `(w, F(w⁻), F(w))`.
fn standardized_steps(law: &DiscreteLaw, mean: f64, sigma: f64) -> Vec<(f64, f64, f64)> {
    let mut cum = CompensatedSum::new();
    law.atoms()
        .iter()
        .map(|a| {
            let before = cum.value();
            cum.add(a.prob);
            ((a.value - mean) / sigma, before, cum.value().min(1.0))
        })
        .collect()
}

/// sup_t |P(W < t) − Φ(t)| with W = (Y − mean)/σ, checking both one-sided
/// limits at every atom.
pub fn kolmogorov_exact(law: &DiscreteLaw, mean: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(standardized_steps(law, mean, sigma)
        .into_iter()
        .map(|(w, before, after)| {
            let phi = normal_cdf(w);
            (before - phi).abs().max((after - phi).abs())
        })
        .fold(0.0, f64::max))
}

/// ∫ |P(W ≤ t) − Φ(t)| dt, integrated piece by piece in closed form.
pub fn wasserstein_exact(law: &DiscreteLaw, mean: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let steps = standardized_steps(law, mean, sigma);
    let Some(first) = steps.first() else {
        return Err(Error::InvalidParameter("empty law".into()));
    };
    let last = steps.last().unwrap();
    let mut total = CompensatedSum::new();
    total.add(left_tail(first.0));
    for w in steps.windows(2) {
        total.add(segment(w[0].0, w[1].0, w[0].2));
    }
    total.add(right_tail(last.0));
    Ok(total.value())
}

/// Both exact distances.
pub fn exact_distances(law: &DiscreteLaw, mean: f64, sigma: f64) -> Result<(f64, f64)> {
    Ok((
        wasserstein_exact(law, mean, sigma)?,
        kolmogorov_exact(law, mean, sigma)?,
    ))
}

fn sorted_checked(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < MIN_EMPIRICAL_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_EMPIRICAL_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Kolmogorov distance of already standardized samples to N(0, 1).
pub fn kolmogorov_empirical(samples: &[f64]) -> Result<DistanceEstimate> {
    let sorted = sorted_checked(samples)?;
    let n = sorted.len() as f64;
    let value = sorted
        .iter()
        .enumerate()
        .map(|(t, &w)| {
            let phi = normal_cdf(w);
            ((t + 1) as f64 / n - phi).abs().max((t as f64 / n - phi).abs())
        })
        .fold(0.0, f64::max);
    Ok(DistanceEstimate {
        metric: Metric::Linf,
        value,
        method: DistanceMethod::Empirical {
            samples: sorted.len(),
            seed: None,
        },
        ci_halfwidth: Some(((2.0f64 / 0.05).ln() / (2.0 * n)).sqrt()),
    })
}

/// Wasserstein distance of already standardized samples to N(0, 1). The
/// reported half-width is 1.96 times an influence-function standard error.
pub fn wasserstein_empirical(samples: &[f64]) -> Result<DistanceEstimate> {
    let sorted = sorted_checked(samples)?;
    let law = DiscreteLaw::empirical(&sorted);
    let value = wasserstein_exact(&law, 0.0, 1.0)?;

    // g(x) = −∫_{x₁}^{x} sign(F_N − Φ); its sample spread drives the error.
    let atoms = law.atoms();
    let mut cum = 0.0;
    let mut g = 0.0;
    let mut g_at = Vec::with_capacity(atoms.len());
    for t in 0..atoms.len() {
        g_at.push(g);
        cum += atoms[t].prob;
        if let Some(next) = atoms.get(t + 1) {
            let (a, b) = (atoms[t].value, next.value);
            let crossing = if cum >= 1.0 {
                f64::INFINITY
            } else {
                normal_quantile(cum)
            };
            let split = crossing.clamp(a, b);
            g -= (split - a) - (b - split);
        }
    }
    let mut acc = MomentAccumulator::default();
    for (atom, gv) in atoms.iter().zip(&g_at) {
        let copies = (atom.prob * sorted.len() as f64).round() as usize;
        for _ in 0..copies.max(1) {
            acc.push(*gv);
        }
    }
    Ok(DistanceEstimate {
        metric: Metric::L1,
        value,
        method: DistanceMethod::Empirical {
            samples: sorted.len(),
            seed: None,
        },
        ci_halfwidth: Some(acc.ci95_halfwidth()),
    })
}
