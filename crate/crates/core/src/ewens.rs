//! The Ewens measure on permutations of `[n]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::perm::{CycleType, Permutation};

/// Above this size probabilities are evaluated in log space.
const LOG_SPACE_ABOVE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwensParams {
    pub theta: f64,
    pub n: usize,
}

impl EwensParams {
    pub fn new(theta: f64, n: usize) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must be a positive finite number (got {theta})"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        Ok(Self { theta, n })
    }

    /// θ + n − 1, the denominator scale that shows up everywhere.
    pub fn shifted(&self) -> f64 {
        self.theta + self.n as f64 - 1.0
    }
}

/// x^{(m)} = x(x+1)…(x+m−1).
pub fn rising_factorial(x: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, t| acc * (x + t as f64))
}

/// x_{(m)} = x(x−1)…(x−m+1).
pub fn falling_factorial(x: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, t| acc * (x - t as f64))
}

fn ln_rising_factorial(x: f64, m: usize) -> f64 {
    ln_gamma(x + m as f64) - ln_gamma(x)
}

fn check_size(n: usize, params: &EwensParams) -> Result<()> {
    if n != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            got: n,
        });
    }
    Ok(())
}

/// θ^{#(π)} / θ^{(n)}.
pub fn ewens_pmf(perm: &Permutation, params: &EwensParams) -> Result<f64> {
    check_size(perm.n(), params)?;
    Ok(pmf_from_cycle_count(perm.cycle_count(), params))
}

pub(crate) fn pmf_from_cycle_count(cycles: usize, params: &EwensParams) -> f64 {
    let theta = params.theta;
    if params.n > LOG_SPACE_ABOVE {
        (cycles as f64 * theta.ln() - ln_rising_factorial(theta, params.n)).exp()
    } else {
        theta.powi(cycles as i32) / rising_factorial(theta, params.n)
    }
}

/// Probability that an Ewens permutation has the given cycle type; zero for
/// count vectors that do not describe a permutation of `[n]`.
pub fn cycle_type_pmf(ctype: &CycleType, params: &EwensParams) -> f64 {
    let n = params.n;
    let fits = ctype
        .counts
        .iter()
        .enumerate()
        .all(|(q, &c)| c == 0 || q < n);
    if !fits || ctype.weight() != n {
        return 0.0;
    }
    let theta = params.theta;
    if n > LOG_SPACE_ABOVE {
        let mut ln_p = ln_gamma(n as f64 + 1.0) - ln_rising_factorial(theta, n);
        for (q, &c) in ctype.counts.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                ln_p += c * theta.ln() - c * ((q + 1) as f64).ln() - ln_gamma(c + 1.0);
            }
        }
        return ln_p.exp();
    }
    // Interleave numerator and denominator factors to stay in range.
    let mut p = 1.0;
    for t in 0..n {
        p *= (t + 1) as f64 / (theta + t as f64);
    }
    for (q, &c) in ctype.counts.iter().enumerate() {
        for m in 0..c {
            p *= theta / ((q + 1) as f64 * (m + 1) as f64);
        }
    }
    p
}

/// Chinese restaurant construction: element `m` (1-based) opens a new cycle
/// with probability θ/(θ+m−1), otherwise it is placed right after one of the
/// `m − 1` earlier elements chosen uniformly.
pub fn sample_crp<R: Rng + ?Sized>(params: &EwensParams, rng: &mut R) -> Permutation {
    let theta = params.theta;
    let mut images = Vec::with_capacity(params.n);
    for m in 0..params.n {
        let u: f64 = rng.random();
        if m == 0 || u * (theta + m as f64) < theta {
            images.push(m);
        } else {
            let after = rng.random_range(0..m);
            images.push(images[after]);
            images[after] = m;
        }
    }
    Permutation::from_images_unchecked(images)
}

/// Prescribed images `π(a) = ξ_a` for `a` in some subset of `[n]`. Repeated
/// identical constraints collapse; contradictory or non-injective ones make
/// the map inconsistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialMap {
    pairs: Vec<(usize, usize)>,
    consistent: bool,
}

impl PartialMap {
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        pairs.dedup();
        let domain_ok = pairs.windows(2).all(|w| w[0].0 != w[1].0);
        let mut images: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        images.sort_unstable();
        let image_ok = images.windows(2).all(|w| w[0] != w[1]);
        Self {
            pairs,
            consistent: domain_ok && image_ok,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn domain(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn get(&self, a: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&a, |p| p.0)
            .ok()
            .map(|t| self.pairs[t].1)
    }

    /// Number of cycles closed entirely by the constraints.
    pub fn closed_loops(&self) -> usize {
        let m = self.pairs.len();
        let mut visited = vec![false; m];
        let mut loops = 0;
        for start in 0..m {
            if visited[start] {
                continue;
            }
            let mut path = Vec::new();
            let mut t = start;
            loop {
                if visited[t] {
                    break;
                }
                visited[t] = true;
                path.push(t);
                let next = self.pairs[t].1;
                match self.pairs.binary_search_by_key(&next, |p| p.0) {
                    Ok(u) => {
                        if u == start {
                            loops += 1;
                            break;
                        }
                        t = u;
                    }
                    Err(_) => break,
                }
            }
        }
        loops
    }

    pub fn satisfied_by(&self, perm: &Permutation) -> bool {
        self.pairs
            .iter()
            .all(|&(a, x)| a < perm.n() && perm.image(a) == x)
    }
}

/// P(π(a) = ξ_a for all constraints) = θ^{closed loops} / (θ+n−1)_{(|B|)};
/// zero for inconsistent maps.
pub fn constrained_prob(pm: &PartialMap, params: &EwensParams) -> f64 {
    if !pm.is_consistent() || pm.pairs.iter().any(|&(a, x)| a >= params.n || x >= params.n) {
        return 0.0;
    }
    params.theta.powi(pm.closed_loops() as i32) / falling_factorial(params.shifted(), pm.len())
}

/// P(π = full | π agrees with `given` on its domain B) = θ^{#(π∖B)} / θ^{(n−|B|)}.
pub fn conditional_remaining_prob(
    full: &Permutation,
    given: &PartialMap,
    params: &EwensParams,
) -> Result<f64> {
    check_size(full.n(), params)?;
    if !given.is_consistent() || !given.satisfied_by(full) {
        return Err(Error::InconsistentConfig(
            "the full permutation does not extend the given constraints".into(),
        ));
    }
    let domain = given.domain();
    let remaining = params.n - domain.len();
    let cycles = full.delete(&domain).cycle_count();
    Ok(params.theta.powi(cycles as i32) / rising_factorial(params.theta, remaining))
}

/// E[Π_j (c_j)_{(m_j)}] for `orders[j − 1] = m_j`.
pub fn cycle_count_factorial_moment(orders: &[usize], params: &EwensParams) -> f64 {
    let n = params.n;
    let total: usize = orders.iter().enumerate().map(|(q, &m)| (q + 1) * m).sum();
    if total > n {
        return 0.0;
    }
    let mut value =
        falling_factorial(n as f64, total) / falling_factorial(params.shifted(), total);
    for (q, &m) in orders.iter().enumerate() {
        value *= (params.theta / (q + 1) as f64).powi(m as i32);
    }
    value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Moments {
    /// E[c₁]
    pub mean: f64,
    /// E[c₁(c₁−1)]
    pub second_factorial: f64,
    /// E[c₁²]
    pub second: f64,
    /// E[c₁²(c₁−1)²]
    pub fourth_mixed: f64,
}

pub fn c1_moments(params: &EwensParams) -> C1Moments {
    let theta = params.theta;
    let n = params.n as f64;
    let s = params.shifted();
    let ratio = |m: usize| theta.powi(m as i32) * falling_factorial(n, m) / falling_factorial(s, m);
    let mean = ratio(1);
    let second_factorial = ratio(2);
    C1Moments {
        mean,
        second_factorial,
        second: second_factorial + mean,
        fourth_mixed: ratio(4) + 4.0 * ratio(3) + 2.0 * ratio(2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::stream_rng;

    fn params(theta: f64, n: usize) -> EwensParams {
        EwensParams::new(theta, n).unwrap()
    }

    #[test]
    fn factorials() {
        assert_eq!(rising_factorial(7.3, 0), 1.0);
        assert_eq!(rising_factorial(2.0, 3), 24.0);
        assert_eq!(rising_factorial(1.0, 5), 120.0);
        assert_eq!(falling_factorial(5.0, 2), 20.0);
        assert_eq!(falling_factorial(-1.5, 0), 1.0);
        assert_eq!(falling_factorial(3.0, 4), 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(EwensParams::new(0.0, 3).is_err());
        assert!(EwensParams::new(f64::NAN, 3).is_err());
        assert!(EwensParams::new(1.0, 0).is_err());
    }

    #[test]
    fn small_pmf_values() {
        let p = params(2.0, 2);
        let id = Permutation::identity(2);
        let swap = Permutation::from_one_based(&[2, 1]).unwrap();
        assert!((ewens_pmf(&id, &p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((ewens_pmf(&swap, &p).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ewens_pmf(&Permutation::identity(1), &params(3.5, 1)).unwrap(), 1.0);
        assert!(ewens_pmf(&id, &params(1.0, 3)).is_err());
    }

    #[test]
    fn log_space_agrees_with_direct_product() {
        let p = params(1.7, 25);
        let perm = Permutation::identity(25);
        let direct = 1.7f64.powi(25) / rising_factorial(1.7, 25);
        let got = ewens_pmf(&perm, &p).unwrap();
        assert!((got / direct - 1.0).abs() < 1e-11);
        let ct = perm.cycle_type();
        assert!((cycle_type_pmf(&ct, &p) / direct - 1.0).abs() < 1e-11);
    }

    #[test]
    fn cycle_type_pmf_examples() {
        let ct = CycleType::new(vec![3, 0, 0]);
        assert!((cycle_type_pmf(&ct, &params(1.0, 3)) - 1.0 / 6.0).abs() < 1e-15);
        let bad = CycleType::new(vec![1, 0, 1]);
        assert_eq!(cycle_type_pmf(&bad, &params(1.0, 3)), 0.0);
    }

    #[test]
    fn crp_single_element_is_identity() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..10 {
            assert_eq!(sample_crp(&params(0.3, 1), &mut rng), Permutation::identity(1));
        }
    }

    #[test]
    fn crp_is_reproducible() {
        let p = params(1.3, 12);
        let a: Vec<_> = {
            let mut rng = stream_rng(42, 7);
            (0..50).map(|_| sample_crp(&p, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = stream_rng(42, 7);
            (0..50).map(|_| sample_crp(&p, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn crp_fixed_point_mean_for_large_theta() {
        let p = params(50.0, 10);
        let mut rng = stream_rng(11, 0);
        let draws = 200_000;
        let total: usize = (0..draws).map(|_| sample_crp(&p, &mut rng).fixed_points()).sum();
        let mean = total as f64 / draws as f64;
        let expected = c1_moments(&p).mean;
        assert!((mean - expected).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn single_constraint_probabilities() {
        let p = params(2.5, 6);
        let fixed = PartialMap::new([(5, 5)]);
        let moved = PartialMap::new([(5, 2)]);
        assert!((constrained_prob(&fixed, &p) - 2.5 / 7.5).abs() < 1e-15);
        assert!((constrained_prob(&moved, &p) - 1.0 / 7.5).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_maps_have_zero_probability() {
        let p = params(1.0, 5);
        let clash = PartialMap::new([(0, 1), (2, 1)]);
        assert!(!clash.is_consistent());
        assert_eq!(constrained_prob(&clash, &p), 0.0);
        let conflict = PartialMap::new([(0, 1), (0, 2)]);
        assert_eq!(constrained_prob(&conflict, &p), 0.0);
        let repeated = PartialMap::new([(0, 1), (0, 1)]);
        assert!(repeated.is_consistent());
        assert_eq!(repeated.len(), 1);
    }

    #[test]
    fn closed_loops_count_only_complete_cycles() {
        assert_eq!(PartialMap::new([(0, 1), (1, 0), (2, 3)]).closed_loops(), 1);
        assert_eq!(PartialMap::new([(0, 1), (1, 2)]).closed_loops(), 0);
        assert_eq!(PartialMap::new([(0, 0), (1, 2), (2, 1)]).closed_loops(), 2);
    }

    #[test]
    fn conditional_probability_edge_cases() {
        let p = params(1.5, 4);
        let perm = Permutation::from_one_based(&[2, 1, 3, 4]).unwrap();
        let empty = PartialMap::new([]);
        let got = conditional_remaining_prob(&perm, &empty, &p).unwrap();
        assert!((got - ewens_pmf(&perm, &p).unwrap()).abs() < 1e-15);
        let all = PartialMap::new((0..4).map(|a| (a, perm.image(a))));
        assert_eq!(conditional_remaining_prob(&perm, &all, &p).unwrap(), 1.0);
        let wrong = PartialMap::new([(0, 0)]);
        assert!(conditional_remaining_prob(&perm, &wrong, &p).is_err());
    }

    #[test]
    fn factorial_moment_examples() {
        let p = params(0.7, 6);
        let got = cycle_count_factorial_moment(&[1], &p);
        assert!((got - 0.7 * 6.0 / 5.7).abs() < 1e-15);
        assert_eq!(cycle_count_factorial_moment(&[0, 0, 0, 2], &p), 0.0);
    }

    #[test]
    fn c1_second_moment_closed_form() {
        let p = params(2.0, 7);
        let m = c1_moments(&p);
        let expected = 4.0 * 42.0 / (8.0 * 7.0) + 2.0 * 7.0 / 8.0;
        assert!((m.second - expected).abs() < 1e-14);
    }
}
