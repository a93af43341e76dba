//! Constructive sampling of the transposition Stein pair and of the
//! approximate zero-bias variable Y* = U·Y† + (1 − U)·Y‡.
//!
//! Sampling goes in four steps: π from the Ewens measure, the index pair
//! (I†, J†) with probability ∝ E b²(i, j), the pre- and post-images
//! (r, s, k, l) of the pair with probability ∝ b² times their constrained
//! probability, and finally π† from π by deleting {i, j, r, s} and
//! reinserting them so the chosen images hold.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comb::{
    b_value, config_case, index_weight_matrix, require_min_n, stein_lambda, tuple_square_sum,
    CaseLabel, PairPool, Shape, SHAPES,
};
use crate::error::{Error, Result};
use crate::ewens::{constrained_prob, ewens_pmf, sample_crp, EwensParams, PartialMap};
use crate::matrix::ScoreMatrix;
use crate::oracle::{enumerate_permutations, PairLaw, JOINT_ENUMERATION_CAP};
use crate::par::{monte_carlo_blocks, CompensatedSum, Execution};
use crate::perm::Permutation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinPairSample {
    pub pi_prime: Permutation,
    pub i: usize,
    pub j: usize,
    pub pi_double: Permutation,
    pub y_prime: f64,
    pub y_double: f64,
    pub lambda: f64,
}

/// Draws (I, J) uniformly over ordered distinct pairs and conjugates.
pub fn make_stein_pair<R: Rng + ?Sized>(
    a: &ScoreMatrix,
    perm: &Permutation,
    rng: &mut R,
) -> Result<SteinPairSample> {
    let n = a.n();
    require_min_n(n)?;
    if perm.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: perm.n(),
        });
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    let pi_double = perm.conjugate_by_transposition(i, j);
    Ok(SteinPairSample {
        y_prime: a.statistic(perm),
        y_double: a.statistic(&pi_double),
        pi_prime: perm.clone(),
        i,
        j,
        pi_double,
        lambda: stein_lambda(n),
    })
}

/// The index pair with the pre-images `r = π†⁻¹(i)`, `s = π†⁻¹(j)` and
/// images `k = π†(i)`, `l = π†(j)` it is to be given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareBiasConfig {
    pub i: usize,
    pub j: usize,
    pub r: usize,
    pub s: usize,
    pub k: usize,
    pub l: usize,
    pub case: CaseLabel,
    /// b² times the constrained probability of the four images.
    pub weight: f64,
}

impl SquareBiasConfig {
    /// Validates the labels against `a` and fills in case and weight.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: &ScoreMatrix,
        params: &EwensParams,
        i: usize,
        j: usize,
        r: usize,
        s: usize,
        k: usize,
        l: usize,
    ) -> Result<Self> {
        let case = config_case(a.n(), i, j, r, s, k, l)?;
        let b = b_value(i, j, r, s, k, l, case, a)?;
        Ok(Self {
            i,
            j,
            r,
            s,
            k,
            l,
            case,
            weight: b * b * constrained_prob(&Self::map_of(i, j, r, s, k, l), params),
        })
    }

    fn map_of(i: usize, j: usize, r: usize, s: usize, k: usize, l: usize) -> PartialMap {
        PartialMap::new([(r, i), (s, j), (i, k), (j, l)])
    }

    pub fn constraints(&self) -> PartialMap {
        Self::map_of(self.i, self.j, self.r, self.s, self.k, self.l)
    }

    /// Distinct members of {i, j, r, s}, in that order.
    pub fn deleted(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(4);
        for x in [self.i, self.j, self.r, self.s] {
            if !d.contains(&x) {
                d.push(x);
            }
        }
        d
    }

    pub fn holds_in(&self, perm: &Permutation) -> bool {
        self.constraints().satisfied_by(perm)
    }
}

/// A configuration with the probability that an Ewens permutation realizes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfigMass {
    pub config: SquareBiasConfig,
    pub prob: f64,
}

/// Every realizable (r, s, k, l) for the pair, by brute force over [n]⁴.
pub fn enumerate_configs(
    a: &ScoreMatrix,
    params: &EwensParams,
    i: usize,
    j: usize,
) -> Result<Vec<ConfigMass>> {
    a.check_params(params)?;
    let n = params.n;
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidParameter("need two distinct labels in [n]".into()));
    }
    let mut out = Vec::new();
    for r in 0..n {
        for s in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if config_case(n, i, j, r, s, k, l).is_err() {
                        continue;
                    }
                    let config = SquareBiasConfig::new(a, params, i, j, r, s, k, l)?;
                    let prob = constrained_prob(&config.constraints(), params);
                    out.push(ConfigMass { config, prob });
                }
            }
        }
    }
    Ok(out)
}

/// The law of (I†, J†): P(i, j) ∝ E b²(i, j).
#[derive(Debug, Clone)]
pub struct IndexWeights {
    n: usize,
    weights: Vec<Vec<f64>>,
    total: f64,
    sampler: WeightedIndex<f64>,
}

impl IndexWeights {
    pub fn new(exec: Execution, a: &ScoreMatrix, params: &EwensParams) -> Result<Self> {
        a.check_params(params)?;
        require_min_n(params.n)?;
        let weights = index_weight_matrix(exec, a, params);
        let flat: Vec<f64> = weights.iter().flatten().map(|w| w.max(0.0)).collect();
        let total = flat.iter().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(Error::DegenerateSquareBias);
        }
        let sampler = WeightedIndex::new(&flat).map_err(|_| Error::DegenerateSquareBias)?;
        Ok(Self {
            n: params.n,
            weights,
            total,
            sampler,
        })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Σ_{i≠j} E b²(i, j).
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Σ_{i≠j} E b²(i, j) / (n(n−1)) = E(Y′ − Y″)².
    pub fn e_ydiff_sq(&self) -> f64 {
        self.total / (self.n * (self.n - 1)) as f64
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j].max(0.0) / self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let t = self.sampler.sample(rng);
        (t / self.n, t % self.n)
    }
}

/// Square-bias index weights as an n×n array.
pub fn index_square_bias_weights(a: &ScoreMatrix, params: &EwensParams) -> Result<Vec<Vec<f64>>> {
    Ok(IndexWeights::new(Execution::default(), a, params)?
        .weights()
        .to_vec())
}

/// Masses that are exactly zero in exact arithmetic come out of the closed
/// form as cancellation residue; anything below this fraction of the total
/// is treated as zero.
const MASS_NOISE: f64 = 1e-12;

fn drop_rounding_noise(mut masses: Vec<f64>) -> Vec<f64> {
    let cut = MASS_NOISE * masses.iter().sum::<f64>();
    for m in &mut masses {
        if *m <= cut {
            *m = 0.0;
        }
    }
    masses
}

/// Exact sampler for (r, s, k, l) given (i, j).
///
/// A shape is drawn with probability ∝ its total b²·p, then its free labels
/// one at a time, each with probability ∝ the b² mass of all completions.
#[derive(Debug, Clone)]
pub struct PrePostSampler<'a> {
    a: &'a ScoreMatrix,
    params: EwensParams,
    i: usize,
    j: usize,
    pool: PairPool,
    shape_mass: Vec<f64>,
    total: f64,
}

impl<'a> PrePostSampler<'a> {
    pub fn new(a: &'a ScoreMatrix, params: &EwensParams, i: usize, j: usize) -> Result<Self> {
        a.check_params(params)?;
        require_min_n(params.n)?;
        if i == j || i >= params.n || j >= params.n {
            return Err(Error::InvalidParameter("need two distinct labels in [n]".into()));
        }
        let pool = PairPool::new(a, i, j);
        let shape_mass = drop_rounding_noise(
            SHAPES
                .iter()
                .map(|s| (s.probability(params) * pool.shape_sum(s)).max(0.0))
                .collect(),
        );
        let total: f64 = shape_mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateSquareBias);
        }
        Ok(Self {
            a,
            params: *params,
            i,
            j,
            pool,
            shape_mass,
            total,
        })
    }

    /// E b²(i, j).
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Unnormalized masses of choosing each pool position next, given the
    /// shape, the running offset and the positions already used.
    fn next_masses(&self, shape: &Shape, t: usize, c: f64, used: &[bool], sums: (f64, f64)) -> Vec<f64> {
        let rest = &shape.weights[t + 1..];
        let remaining = self.pool.labels.len() - used.iter().filter(|u| **u).count();
        let masses: Vec<f64> = self
            .pool
            .d
            .iter()
            .zip(used)
            .map(|(&d, &u)| {
                if u {
                    0.0
                } else {
                    tuple_square_sum(
                        c + shape.weights[t] * d,
                        rest,
                        sums.0 - d,
                        sums.1 - d * d,
                        remaining - 1,
                    )
                    .max(0.0)
                }
            })
            .collect();
        drop_rounding_noise(masses)
    }

    fn build(&self, shape: &Shape, positions: &[usize]) -> SquareBiasConfig {
        let free: Vec<usize> = positions.iter().map(|&p| self.pool.labels[p]).collect();
        let [r, s, k, l] = shape.realize(self.i, self.j, &free);
        SquareBiasConfig::new(self.a, &self.params, self.i, self.j, r, s, k, l)
            .expect("shapes only produce realizable configurations")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SquareBiasConfig {
        let pick = |masses: &[f64], rng: &mut R| {
            let total: f64 = masses.iter().sum();
            let mut u = rng.random::<f64>() * total;
            let mut last = 0;
            for (t, &m) in masses.iter().enumerate() {
                if m > 0.0 {
                    last = t;
                    if u < m {
                        return t;
                    }
                    u -= m;
                }
            }
            last
        };
        let shape = &SHAPES[pick(&self.shape_mass, rng)];
        let mut used = vec![false; self.pool.labels.len()];
        let mut positions = Vec::with_capacity(shape.weights.len());
        let mut c = shape.offset * self.pool.alpha;
        let mut sums = (self.pool.p1, self.pool.p2);
        for t in 0..shape.weights.len() {
            let masses = self.next_masses(shape, t, c, &used, sums);
            let x = pick(&masses, rng);
            let d = self.pool.d[x];
            used[x] = true;
            positions.push(x);
            c += shape.weights[t] * d;
            sums = (sums.0 - d, sums.1 - d * d);
        }
        self.build(shape, &positions)
    }

    /// Every configuration the sampler can return, with the probability it
    /// returns it, found by walking the same decision tree exhaustively.
    pub fn config_law(&self) -> Vec<(SquareBiasConfig, f64)> {
        let mut out = Vec::new();
        for (shape, &mass) in SHAPES.iter().zip(&self.shape_mass) {
            if mass <= 0.0 {
                continue;
            }
            let mut used = vec![false; self.pool.labels.len()];
            let mut positions = Vec::new();
            self.walk(
                shape,
                0,
                shape.offset * self.pool.alpha,
                (self.pool.p1, self.pool.p2),
                &mut used,
                &mut positions,
                mass / self.total,
                &mut out,
            );
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        shape: &Shape,
        t: usize,
        c: f64,
        sums: (f64, f64),
        used: &mut Vec<bool>,
        positions: &mut Vec<usize>,
        prob: f64,
        out: &mut Vec<(SquareBiasConfig, f64)>,
    ) {
        if t == shape.weights.len() {
            out.push((self.build(shape, positions), prob));
            return;
        }
        let masses = self.next_masses(shape, t, c, used, sums);
        let total: f64 = masses.iter().sum();
        for (x, &m) in masses.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let d = self.pool.d[x];
            used[x] = true;
            positions.push(x);
            self.walk(
                shape,
                t + 1,
                c + shape.weights[t] * d,
                (sums.0 - d, sums.1 - d * d),
                used,
                positions,
                prob * m / total,
                out,
            );
            positions.pop();
            used[x] = false;
        }
    }
}

/// Draws (r, s, k, l) for the pair (i, j).
pub fn sample_prepost<R: Rng + ?Sized>(
    i: usize,
    j: usize,
    a: &ScoreMatrix,
    params: &EwensParams,
    rng: &mut R,
) -> Result<SquareBiasConfig> {
    Ok(PrePostSampler::new(a, params, i, j)?.sample(rng))
}

/// Builds π† from π: delete the distinct members of {i, j, r, s}, link them
/// by r→i, i→k, s→j, j→l, and put each resulting chain in front of the
/// label it ends at. Everything else keeps its image.
pub fn construct_dagger(pi: &Permutation, config: &SquareBiasConfig) -> Result<Permutation> {
    let n = pi.n();
    let map = config.constraints();
    if !map.is_consistent() || config_case(n, config.i, config.j, config.r, config.s, config.k, config.l).is_err() {
        return Err(Error::InconsistentConfig(
            "configuration cannot be realized by a permutation".into(),
        ));
    }
    let deleted = config.deleted();
    let mut in_d = vec![false; n];
    for &x in &deleted {
        in_d[x] = true;
    }

    // π with D deleted, as images on [n]∖D.
    let mut out: Vec<usize> = vec![usize::MAX; n];
    for x in 0..n {
        if in_d[x] {
            continue;
        }
        let mut y = pi.image(x);
        while in_d[y] {
            y = pi.image(y);
        }
        out[x] = y;
    }
    for &(x, y) in map.pairs() {
        out[x] = y;
    }

    // Chains are maximal paths inside D; a head has no predecessor in D.
    let mut has_pred_in_d = vec![false; n];
    for &(_, y) in map.pairs() {
        if in_d[y] {
            has_pred_in_d[y] = true;
        }
    }
    for &head in &[config.r, config.s] {
        if has_pred_in_d[head] {
            continue;
        }
        let mut end = head;
        while in_d[out[end]] {
            end = out[end];
        }
        let target = out[end];
        let pred = (0..n)
            .find(|&p| !in_d[p] && out[p] == target)
            .expect("every kept label has a kept predecessor");
        out[pred] = head;
        has_pred_in_d[head] = true;
    }

    let dagger = Permutation::new(out).map_err(|e| {
        Error::InconsistentConfig(format!("construction produced a non-permutation: {e}"))
    })?;
    if !config.holds_in(&dagger) {
        return Err(Error::InconsistentConfig(
            "constructed permutation misses a prescribed image".into(),
        ));
    }
    if dagger.delete(&deleted) != pi.delete(&deleted) {
        return Err(Error::InconsistentConfig(
            "construction changed the reduced permutation".into(),
        ));
    }
    Ok(dagger)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSample {
    pub pi: Permutation,
    pub config: SquareBiasConfig,
    pub pi_dagger: Permutation,
    pub pi_ddagger: Permutation,
    pub u: f64,
    pub y_prime: f64,
    pub y_dagger: f64,
    pub y_ddagger: f64,
    pub y_star: f64,
}

#[derive(Serialize)]
struct CouplingRecord<'a> {
    pi: &'a Permutation,
    i: usize,
    j: usize,
    r: usize,
    s: usize,
    k: usize,
    l: usize,
    case: CaseLabel,
    u: f64,
    y_prime: f64,
    y_dagger: f64,
    y_ddagger: f64,
    y_star: f64,
}

impl Serialize for CouplingSample {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let c = &self.config;
        CouplingRecord {
            pi: &self.pi,
            i: c.i + 1,
            j: c.j + 1,
            r: c.r + 1,
            s: c.s + 1,
            k: c.k + 1,
            l: c.l + 1,
            case: c.case,
            u: self.u,
            y_prime: self.y_prime,
            y_dagger: self.y_dagger,
            y_ddagger: self.y_ddagger,
            y_star: self.y_star,
        }
        .serialize(s)
    }
}

/// Reusable sampler of approximate zero-bias couplings for one (A, θ).
#[derive(Debug, Clone)]
pub struct CouplingSampler<'a> {
    a: &'a ScoreMatrix,
    params: EwensParams,
    index: IndexWeights,
}

impl<'a> CouplingSampler<'a> {
    pub fn new(exec: Execution, a: &'a ScoreMatrix, params: &EwensParams) -> Result<Self> {
        Ok(Self {
            a,
            params: *params,
            index: IndexWeights::new(exec, a, params)?,
        })
    }

    pub fn index_weights(&self) -> &IndexWeights {
        &self.index
    }

    /// Completes a coupling for a given π, pair and configuration.
    pub fn complete(&self, pi: Permutation, config: SquareBiasConfig, u: f64) -> Result<CouplingSample> {
        let pi_dagger = construct_dagger(&pi, &config)?;
        let pi_ddagger = pi_dagger.conjugate_by_transposition(config.i, config.j);
        let y_dagger = self.a.statistic(&pi_dagger);
        let y_ddagger = self.a.statistic(&pi_ddagger);
        Ok(CouplingSample {
            y_prime: self.a.statistic(&pi),
            y_star: u * y_dagger + (1.0 - u) * y_ddagger,
            pi,
            config,
            pi_dagger,
            pi_ddagger,
            u,
            y_dagger,
            y_ddagger,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CouplingSample> {
        let pi = sample_crp(&self.params, rng);
        let (i, j) = self.index.sample(rng);
        let config = PrePostSampler::new(self.a, &self.params, i, j)?.sample(rng);
        let u = rng.random::<f64>();
        self.complete(pi, config, u)
    }

    /// Exact law of (Y†, Y‡) produced by the sampler, by enumerating π, the
    /// index pair and the configuration (n ≤ 6).
    pub fn exact_law(&self) -> Result<PairLaw> {
        let n = self.params.n;
        if n > JOINT_ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n,
                cap: JOINT_ENUMERATION_CAP,
            });
        }
        let mut configs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p_ij = if i == j { 0.0 } else { self.index.prob(i, j) };
                if p_ij <= 0.0 {
                    continue;
                }
                for (config, p) in PrePostSampler::new(self.a, &self.params, i, j)?.config_law() {
                    configs.push((config, p_ij * p));
                }
            }
        }
        let mut points = Vec::new();
        for pi in enumerate_permutations(n)? {
            let w = ewens_pmf(&pi, &self.params)?;
            for (config, p) in &configs {
                let dagger = construct_dagger(&pi, config)?;
                let ddagger = dagger.conjugate_by_transposition(config.i, config.j);
                points.push((
                    (self.a.statistic(&dagger), self.a.statistic(&ddagger)),
                    w * p,
                ));
            }
        }
        Ok(PairLaw::from_weighted(points))
    }
}

/// One coupling draw.
pub fn sample_approx_zero_bias<R: Rng + ?Sized>(
    a: &ScoreMatrix,
    params: &EwensParams,
    rng: &mut R,
) -> Result<CouplingSample> {
    CouplingSampler::new(Execution::Sequential, a, params)?.sample(rng)
}

/// Streaming summary of |Y* − Y′| over many draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosenessSummary {
    pub samples: usize,
    pub max_gap: f64,
    pub mean_abs_gap: f64,
    /// Draws with |Y* − Y′| > 20M.
    pub violations: usize,
    /// Largest number of positions at which π† differs from π.
    pub max_moved: usize,
    pub m: f64,
}

impl<'a> CouplingSampler<'a> {
    /// Draws `samples` couplings on deterministic seed streams and
    /// summarizes how far Y* lands from Y′.
    pub fn closeness(&self, exec: Execution, samples: usize, seed: u64) -> Result<ClosenessSummary> {
        let limit = 20.0 * self.a.max_abs();
        let blocks = monte_carlo_blocks(exec, samples, seed, 0, |rng, count| -> Result<_> {
            let mut max_gap = 0.0f64;
            let mut sum = CompensatedSum::new();
            let mut violations = 0;
            let mut max_moved = 0;
            for _ in 0..count {
                let c = self.sample(rng)?;
                let gap = (c.y_star - c.y_prime).abs();
                max_gap = max_gap.max(gap);
                sum.add(gap);
                if gap > limit {
                    violations += 1;
                }
                let moved = (0..c.pi.n())
                    .filter(|&x| c.pi.image(x) != c.pi_dagger.image(x))
                    .count();
                max_moved = max_moved.max(moved);
            }
            Ok((max_gap, sum, violations, max_moved))
        });
        let mut summary = ClosenessSummary {
            samples,
            max_gap: 0.0,
            mean_abs_gap: 0.0,
            violations: 0,
            max_moved: 0,
            m: self.a.max_abs(),
        };
        let mut sum = CompensatedSum::new();
        for block in blocks {
            let (max_gap, s, violations, moved) = block?;
            summary.max_gap = summary.max_gap.max(max_gap);
            sum.merge(&s);
            summary.violations += violations;
            summary.max_moved = summary.max_moved.max(moved);
        }
        summary.mean_abs_gap = sum.value() / samples as f64;
        Ok(summary)
    }
}
