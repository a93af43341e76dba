//! The combinatorial statistic Y = Σ â_{i,π(i)} under the Ewens measure:
//! the transposition Stein pair, its case partition and differences, the
//! remainder term, and the exact second-moment decomposition.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::{kappa1, kappa2};
use crate::error::{Error, Result};
use crate::ewens::{falling_factorial, EwensParams, PartialMap};
use crate::matrix::ScoreMatrix;
use crate::oracle::{enumerate_permutations, ATOM_TOLERANCE};
use crate::par::{map_indexed, monte_carlo_blocks, CompensatedSum, Execution, MomentAccumulator};
use crate::perm::Permutation;

/// Smallest n for which the Stein pair machinery is set up.
pub const MIN_N: usize = 6;

pub(crate) fn require_min_n(n: usize) -> Result<()> {
    if n < MIN_N {
        return Err(Error::TooSmall(n));
    }
    Ok(())
}

/// λ = 4/n.
pub fn stein_lambda(n: usize) -> f64 {
    4.0 / n as f64
}

/// Y on centered entries.
pub fn statistic(a: &ScoreMatrix, perm: &Permutation) -> f64 {
    a.statistic(perm)
}

#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseLabel {
    A0_1,
    A0_2,
    A1,
    A2,
    A3,
    A4,
    A5_1,
    A5_2,
    A5_3,
    A5_4,
}

impl CaseLabel {
    pub const ALL: [CaseLabel; 10] = [
        CaseLabel::A0_1,
        CaseLabel::A0_2,
        CaseLabel::A1,
        CaseLabel::A2,
        CaseLabel::A3,
        CaseLabel::A4,
        CaseLabel::A5_1,
        CaseLabel::A5_2,
        CaseLabel::A5_3,
        CaseLabel::A5_4,
    ];

    pub fn is_trivial(self) -> bool {
        matches!(self, CaseLabel::A0_1 | CaseLabel::A0_2)
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Case of `(i, j)` given the pre-images `r = π⁻¹(i)`, `s = π⁻¹(j)` and
/// images `k = π(i)`, `l = π(j)`. Assumes the tuple is realizable.
fn case_of(i: usize, j: usize, r: usize, s: usize, k: usize, l: usize) -> CaseLabel {
    if k == i && l == j {
        CaseLabel::A0_1
    } else if k == j && l == i {
        CaseLabel::A0_2
    } else if k == i {
        CaseLabel::A1
    } else if l == j {
        CaseLabel::A2
    } else if k == j {
        CaseLabel::A3
    } else if l == i {
        CaseLabel::A4
    } else {
        match (r == k, s == l) {
            (true, true) => CaseLabel::A5_1,
            (true, false) => CaseLabel::A5_2,
            (false, true) => CaseLabel::A5_3,
            (false, false) => CaseLabel::A5_4,
        }
    }
}

/// Which block of the partition `(i, j, π)` falls in.
pub fn classify(i: usize, j: usize, perm: &Permutation) -> Result<CaseLabel> {
    if i == j {
        return Err(Error::InvalidParameter(format!(
            "classification needs distinct labels (got i = j = {})",
            i + 1
        )));
    }
    Ok(case_of(
        i,
        j,
        perm.preimage(i),
        perm.preimage(j),
        perm.image(i),
        perm.image(j),
    ))
}

/// Checks that `{r→i, s→j, i→k, j→l}` can be realized by a permutation of
/// `[n]` and returns its case.
pub fn config_case(
    n: usize,
    i: usize,
    j: usize,
    r: usize,
    s: usize,
    k: usize,
    l: usize,
) -> Result<CaseLabel> {
    if [i, j, r, s, k, l].iter().any(|&x| x >= n) {
        return Err(Error::InconsistentConfig(format!("label outside [1, {n}]")));
    }
    if i == j {
        return Err(Error::InconsistentConfig("i and j coincide".into()));
    }
    let map = PartialMap::new([(r, i), (s, j), (i, k), (j, l)]);
    if !map.is_consistent() {
        return Err(Error::InconsistentConfig(format!(
            "constraints {}→{}, {}→{}, {}→{}, {}→{} are not injective",
            r + 1,
            i + 1,
            s + 1,
            j + 1,
            i + 1,
            k + 1,
            j + 1,
            l + 1
        )));
    }
    Ok(case_of(i, j, r, s, k, l))
}

fn b1(a: &ScoreMatrix, i: usize, j: usize, s: usize, l: usize) -> f64 {
    a.get(i, i) + a.get(s, j) + a.get(j, l) - (a.get(j, j) + a.get(s, i) + a.get(i, l))
}

fn b2(a: &ScoreMatrix, i: usize, j: usize, r: usize, k: usize) -> f64 {
    a.get(j, j) + a.get(r, i) + a.get(i, k) - (a.get(i, i) + a.get(r, j) + a.get(j, k))
}

fn b3(a: &ScoreMatrix, i: usize, j: usize, r: usize, l: usize) -> f64 {
    a.get(r, i) + a.get(i, j) + a.get(j, l) - (a.get(r, j) + a.get(j, i) + a.get(i, l))
}

fn b4(a: &ScoreMatrix, i: usize, j: usize, s: usize, k: usize) -> f64 {
    a.get(s, j) + a.get(j, i) + a.get(i, k) - (a.get(s, i) + a.get(i, j) + a.get(j, k))
}

#[allow(clippy::too_many_arguments)]
fn b5(a: &ScoreMatrix, i: usize, j: usize, r: usize, s: usize, k: usize, l: usize) -> f64 {
    a.get(r, i) + a.get(i, k) + a.get(s, j) + a.get(j, l)
        - (a.get(r, j) + a.get(j, k) + a.get(s, i) + a.get(i, l))
}

fn b_for_case(
    a: &ScoreMatrix,
    case: CaseLabel,
    (i, j, r, s, k, l): (usize, usize, usize, usize, usize, usize),
) -> f64 {
    match case {
        CaseLabel::A0_1 | CaseLabel::A0_2 => 0.0,
        CaseLabel::A1 => b1(a, i, j, s, l),
        CaseLabel::A2 => b2(a, i, j, r, k),
        CaseLabel::A3 => b3(a, i, j, r, l),
        CaseLabel::A4 => b4(a, i, j, s, k),
        _ => b5(a, i, j, r, s, k, l),
    }
}

/// Y′ − Y″ for π″ = τ_{i,j} π′ τ_{i,j}, written through the six labels that
/// determine it.
#[allow(clippy::too_many_arguments)]
pub fn b_value(
    i: usize,
    j: usize,
    r: usize,
    s: usize,
    k: usize,
    l: usize,
    case: CaseLabel,
    a: &ScoreMatrix,
) -> Result<f64> {
    let actual = config_case(a.n(), i, j, r, s, k, l)?;
    if actual != case {
        return Err(Error::InconsistentConfig(format!(
            "labels describe case {actual}, not {case}"
        )));
    }
    Ok(b_for_case(a, case, (i, j, r, s, k, l)))
}

/// b at `(i, j)` read off a full permutation.
pub fn b_value_at(a: &ScoreMatrix, perm: &Permutation, i: usize, j: usize) -> Result<f64> {
    let case = classify(i, j, perm)?;
    Ok(b_for_case(
        a,
        case,
        (
            i,
            j,
            perm.preimage(i),
            perm.preimage(j),
            perm.image(i),
            perm.image(j),
        ),
    ))
}

/// T(π), whose conditional mean given Y′ drives the remainder.
pub fn t_statistic(a: &ScoreMatrix, perm: &Permutation, params: &EwensParams) -> f64 {
    let n = perm.n();
    let theta = params.theta;
    let fixed: Vec<usize> = (0..n).filter(|&x| perm.image(x) == x).collect();
    let c1 = fixed.len() as f64;
    let mut is_fixed = vec![false; n];
    for &x in &fixed {
        is_fixed[x] = true;
    }
    let mut diag_fixed = 0.0;
    let mut diag_moved = 0.0;
    for x in 0..n {
        if is_fixed[x] {
            diag_fixed += a.get(x, x);
        } else {
            diag_moved += a.get(x, x);
        }
    }
    let mut fixed_fixed = 0.0;
    let mut fixed_moved = 0.0;
    for &x in &fixed {
        for y in 0..n {
            if y == x {
                continue;
            }
            if is_fixed[y] {
                fixed_fixed += a.get(x, y);
            } else {
                fixed_moved += a.get(x, y);
            }
        }
    }
    2.0 * (n as f64 + c1 - 2.0 * (theta + 1.0)) * diag_fixed + 2.0 * (c1 - 2.0 * theta) * diag_moved
        - 4.0 * fixed_fixed
        - 4.0 * fixed_moved
}

/// Exact conditional remainder R(y′) = E[T | Y′ = y′] / (n(n−1)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderLaw {
    pub lambda: f64,
    /// `(y′, P(Y′ = y′), R(y′))`, sorted by `y′`.
    pub atoms: Vec<(f64, f64, f64)>,
}

impl RemainderLaw {
    pub fn r_at(&self, y: f64) -> Option<f64> {
        self.atoms
            .iter()
            .find(|a| (a.0 - y).abs() <= ATOM_TOLERANCE)
            .map(|a| a.2)
    }

    pub fn e_r(&self) -> f64 {
        self.atoms.iter().map(|a| a.1 * a.2).collect::<CompensatedSum>().value()
    }

    pub fn e_abs_r(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.1 * a.2.abs())
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn e_yr(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.1 * a.0 * a.2)
            .collect::<CompensatedSum>()
            .value()
    }

    /// E[R f(Y′)].
    pub fn e_r_times(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.1 * a.2 * f(a.0))
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Enumerates S_n (n ≤ 8) and conditions T on the value of Y′.
pub fn exact_remainder(a: &ScoreMatrix, params: &EwensParams) -> Result<RemainderLaw> {
    a.check_params(params)?;
    let n = params.n;
    let mut points: Vec<(f64, f64, f64)> = enumerate_permutations(n)?
        .map(|p| {
            let w = crate::ewens::ewens_pmf(&p, params).expect("size checked");
            (a.statistic(&p), w, w * t_statistic(a, &p, params))
        })
        .collect();
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    let pairs = (n * (n - 1)) as f64;
    let mut atoms: Vec<(f64, CompensatedSum, CompensatedSum)> = Vec::new();
    for (y, w, wt) in points {
        match atoms.last_mut() {
            Some(last) if (y - last.0).abs() <= ATOM_TOLERANCE => {
                last.1.add(w);
                last.2.add(wt);
            }
            _ => {
                let mut pw = CompensatedSum::new();
                pw.add(w);
                let mut pt = CompensatedSum::new();
                pt.add(wt);
                atoms.push((y, pw, pt));
            }
        }
    }
    Ok(RemainderLaw {
        lambda: stein_lambda(n),
        atoms: atoms
            .into_iter()
            .map(|(y, w, wt)| (y, w.value(), wt.value() / w.value() / pairs))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Second moment of the pair difference.
//
// For a fixed ordered pair (i, j), every realizable (r, s, k, l) has one of a
// small number of coincidence patterns ("shapes"). Within a shape the
// constrained probability is constant and, writing d_x = â_{x,i} − â_{x,j}
// and α = â_{i,i} − â_{j,j}, the difference is affine in the d's of the free
// labels: b = c·α + Σ_t w_t d_{x_t}. The sum of b² over ordered distinct free
// labels from [n]∖{i, j} then has a closed form in Σd and Σd².

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    I,
    J,
    V(usize),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Shape {
    pub case: CaseLabel,
    /// Where r, s, k, l come from.
    pub slots: [Slot; 4],
    /// Cycles closed by the constraints.
    pub loops: i32,
    /// Number of distinct constrained points.
    pub constrained: usize,
    /// Coefficient of α in b.
    pub offset: f64,
    /// Coefficient of d for each free label.
    pub weights: &'static [f64],
}

use Slot::{I, J, V};

pub(crate) const SHAPES: [Shape; 17] = [
    Shape { case: CaseLabel::A0_1, slots: [I, J, I, J], loops: 2, constrained: 2, offset: 0.0, weights: &[] },
    Shape { case: CaseLabel::A0_2, slots: [J, I, J, I], loops: 1, constrained: 2, offset: 0.0, weights: &[] },
    Shape { case: CaseLabel::A1, slots: [I, V(0), I, V(0)], loops: 2, constrained: 3, offset: 1.0, weights: &[-2.0] },
    Shape { case: CaseLabel::A1, slots: [I, V(0), I, V(1)], loops: 1, constrained: 3, offset: 1.0, weights: &[-1.0, -1.0] },
    Shape { case: CaseLabel::A2, slots: [V(0), J, V(0), J], loops: 2, constrained: 3, offset: -1.0, weights: &[2.0] },
    Shape { case: CaseLabel::A2, slots: [V(0), J, V(1), J], loops: 1, constrained: 3, offset: -1.0, weights: &[1.0, 1.0] },
    Shape { case: CaseLabel::A3, slots: [V(0), I, J, V(0)], loops: 1, constrained: 3, offset: 0.0, weights: &[0.0] },
    Shape { case: CaseLabel::A3, slots: [V(0), I, J, V(1)], loops: 0, constrained: 3, offset: 0.0, weights: &[1.0, -1.0] },
    Shape { case: CaseLabel::A4, slots: [J, V(0), V(0), I], loops: 1, constrained: 3, offset: 0.0, weights: &[0.0] },
    Shape { case: CaseLabel::A4, slots: [J, V(0), V(1), I], loops: 0, constrained: 3, offset: 0.0, weights: &[-1.0, 1.0] },
    Shape { case: CaseLabel::A5_1, slots: [V(0), V(1), V(0), V(1)], loops: 2, constrained: 4, offset: 0.0, weights: &[2.0, -2.0] },
    Shape { case: CaseLabel::A5_2, slots: [V(0), V(1), V(0), V(2)], loops: 1, constrained: 4, offset: 0.0, weights: &[2.0, -1.0, -1.0] },
    Shape { case: CaseLabel::A5_3, slots: [V(0), V(1), V(2), V(1)], loops: 1, constrained: 4, offset: 0.0, weights: &[1.0, -2.0, 1.0] },
    Shape { case: CaseLabel::A5_4, slots: [V(0), V(1), V(1), V(0)], loops: 1, constrained: 4, offset: 0.0, weights: &[0.0, 0.0] },
    Shape { case: CaseLabel::A5_4, slots: [V(0), V(1), V(1), V(2)], loops: 0, constrained: 4, offset: 0.0, weights: &[1.0, 0.0, -1.0] },
    Shape { case: CaseLabel::A5_4, slots: [V(0), V(1), V(2), V(0)], loops: 0, constrained: 4, offset: 0.0, weights: &[0.0, -1.0, 1.0] },
    Shape { case: CaseLabel::A5_4, slots: [V(0), V(1), V(2), V(3)], loops: 0, constrained: 4, offset: 0.0, weights: &[1.0, -1.0, 1.0, -1.0] },
];

impl Shape {
    pub fn probability(&self, params: &EwensParams) -> f64 {
        params.theta.powi(self.loops) / falling_factorial(params.shifted(), self.constrained)
    }

    /// `(r, s, k, l)` for the given free labels.
    pub fn realize(&self, i: usize, j: usize, free: &[usize]) -> [usize; 4] {
        self.slots.map(|slot| match slot {
            Slot::I => i,
            Slot::J => j,
            Slot::V(t) => free[t],
        })
    }
}

/// Σ over ordered distinct `x_1..x_q` from a pool of `m` labels of
/// `(c + Σ_t w_t d_{x_t})²`, given `p1 = Σ d` and `p2 = Σ d²` over the pool.
pub(crate) fn tuple_square_sum(c: f64, weights: &[f64], p1: f64, p2: f64, m: usize) -> f64 {
    let q = weights.len();
    if q > m {
        return 0.0;
    }
    let mf = m as f64;
    let s1: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    let mut total = c * c * falling_factorial(mf, q);
    if q >= 1 {
        total += (2.0 * c * s1 * p1 + s2 * p2) * falling_factorial(mf - 1.0, q - 1);
    }
    if q >= 2 {
        total += (s1 * s1 - s2) * (p1 * p1 - p2) * falling_factorial(mf - 2.0, q - 2);
    }
    total
}

/// Per-pair data: the pool `[n]∖{i, j}` with its d values.
#[derive(Debug, Clone)]
pub(crate) struct PairPool {
    pub labels: Vec<usize>,
    pub d: Vec<f64>,
    pub alpha: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PairPool {
    pub fn new(a: &ScoreMatrix, i: usize, j: usize) -> Self {
        let labels: Vec<usize> = (0..a.n()).filter(|&x| x != i && x != j).collect();
        let d: Vec<f64> = labels.iter().map(|&x| a.get(x, i) - a.get(x, j)).collect();
        let p1 = d.iter().copied().collect::<CompensatedSum>().value();
        let p2 = d.iter().map(|x| x * x).collect::<CompensatedSum>().value();
        Self {
            labels,
            d,
            alpha: a.get(i, i) - a.get(j, j),
            p1,
            p2,
        }
    }

    /// Σ b² over the configurations of `shape`.
    pub fn shape_sum(&self, shape: &Shape) -> f64 {
        tuple_square_sum(
            shape.offset * self.alpha,
            shape.weights,
            self.p1,
            self.p2,
            self.labels.len(),
        )
    }
}

/// Probability-weighted b² totals per shape, summed over ordered pairs.
fn shape_totals(exec: Execution, a: &ScoreMatrix, params: &EwensParams) -> [f64; 17] {
    let n = a.n();
    let rows = map_indexed(exec, n, |i| {
        let mut acc = [CompensatedSum::new(); 17];
        for j in 0..n {
            if j == i {
                continue;
            }
            let pool = PairPool::new(a, i, j);
            for (t, shape) in SHAPES.iter().enumerate() {
                acc[t].add(pool.shape_sum(shape));
            }
        }
        acc
    });
    let mut totals = [0.0; 17];
    for (t, total) in totals.iter_mut().enumerate() {
        let mut s = CompensatedSum::new();
        for row in &rows {
            s.merge(&row[t]);
        }
        *total = s.value() * SHAPES[t].probability(params);
    }
    totals
}

/// E b²(i, j) for every ordered pair, the unnormalized law of (I†, J†).
pub fn index_weight_matrix(
    exec: Execution,
    a: &ScoreMatrix,
    params: &EwensParams,
) -> Vec<Vec<f64>> {
    let n = a.n();
    let probs: Vec<f64> = SHAPES.iter().map(|s| s.probability(params)).collect();
    map_indexed(exec, n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    return 0.0;
                }
                let pool = PairPool::new(a, i, j);
                SHAPES
                    .iter()
                    .zip(&probs)
                    .map(|(shape, p)| p * pool.shape_sum(shape))
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect()
    })
}

/// Contributions to E(Y′ − Y″)² split by case. `beta2`, `beta4` and
/// `beta53` mirror `beta1`, `beta3` and `beta52` under i ↔ j and agree with
/// them for symmetric matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSums {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta51: f64,
    pub beta52: f64,
    pub beta53: f64,
    pub beta54: f64,
}

impl BetaSums {
    /// Sum over all cases.
    pub fn total(&self) -> f64 {
        [
            self.beta1,
            self.beta2,
            self.beta3,
            self.beta4,
            self.beta51,
            self.beta52,
            self.beta53,
            self.beta54,
        ]
        .into_iter()
        .collect::<CompensatedSum>()
        .value()
    }

    /// 2β₁ + 2β₃ + β₅,₁ + 2β₅,₂ + β₅,₄, using the mirror symmetry.
    pub fn folded_total(&self) -> f64 {
        2.0 * self.beta1 + 2.0 * self.beta3 + self.beta51 + 2.0 * self.beta52 + self.beta54
    }
}

/// β sums through the per-shape closed form, O(n³).
pub fn beta_sums(exec: Execution, a: &ScoreMatrix, params: &EwensParams) -> Result<BetaSums> {
    a.check_params(params)?;
    require_min_n(params.n)?;
    let t = shape_totals(exec, a, params);
    let pairs = (params.n * (params.n - 1)) as f64;
    let by_case = |case: CaseLabel| {
        SHAPES
            .iter()
            .zip(t)
            .filter(|(s, _)| s.case == case)
            .map(|(_, v)| v)
            .sum::<f64>()
            / pairs
    };
    Ok(BetaSums {
        beta1: by_case(CaseLabel::A1),
        beta2: by_case(CaseLabel::A2),
        beta3: by_case(CaseLabel::A3),
        beta4: by_case(CaseLabel::A4),
        beta51: by_case(CaseLabel::A5_1),
        beta52: by_case(CaseLabel::A5_2),
        beta53: by_case(CaseLabel::A5_3),
        beta54: by_case(CaseLabel::A5_4),
    })
}

/// β sums by literal summation over distinct label tuples, O(n⁶). Kept as
/// an independent reference for [`beta_sums`].
pub fn beta_sums_direct(a: &ScoreMatrix, params: &EwensParams) -> Result<BetaSums> {
    a.check_params(params)?;
    require_min_n(params.n)?;
    let n = params.n;
    let theta = params.theta;
    let s = params.shifted();
    let d3 = (n * (n - 1)) as f64 * falling_factorial(s, 3);
    let d4 = (n * (n - 1)) as f64 * falling_factorial(s, 4);
    let distinct = |xs: &[usize]| {
        (0..xs.len()).all(|p| (p + 1..xs.len()).all(|q| xs[p] != xs[q]))
    };
    let sq = |x: f64| x * x;

    let mut beta1 = [CompensatedSum::new(), CompensatedSum::new()];
    let mut beta2 = [CompensatedSum::new(), CompensatedSum::new()];
    let mut beta3 = [CompensatedSum::new(), CompensatedSum::new()];
    let mut beta4 = [CompensatedSum::new(), CompensatedSum::new()];
    let mut beta51 = CompensatedSum::new();
    let mut beta52 = CompensatedSum::new();
    let mut beta53 = CompensatedSum::new();
    let mut beta54 = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];

    for i in 0..n {
        for j in 0..n {
            if !distinct(&[i, j]) {
                continue;
            }
            for x in 0..n {
                if !distinct(&[i, j, x]) {
                    continue;
                }
                // j and x form a 2-cycle, i fixed; and mirrored.
                beta1[0].add(sq(b1(a, i, j, x, x)));
                beta2[0].add(sq(b2(a, i, j, x, x)));
                // 3-cycles through i and j.
                beta3[0].add(sq(b3(a, i, j, x, x)));
                beta4[0].add(sq(b4(a, i, j, x, x)));
                for y in 0..n {
                    if !distinct(&[i, j, x, y]) {
                        continue;
                    }
                    beta1[1].add(sq(b1(a, i, j, x, y)));
                    beta2[1].add(sq(b2(a, i, j, x, y)));
                    beta3[1].add(sq(b3(a, i, j, x, y)));
                    beta4[1].add(sq(b4(a, i, j, x, y)));
                    // Two 2-cycles (i x)(j y).
                    beta51.add(sq(b5(a, i, j, x, y, x, y)));
                    // 4-cycle i → y → j → x → i.
                    beta54[0].add(sq(b5(a, i, j, x, y, y, x)));
                    for z in 0..n {
                        if !distinct(&[i, j, x, y, z]) {
                            continue;
                        }
                        beta52.add(sq(b5(a, i, j, x, y, x, z)));
                        beta53.add(sq(b5(a, i, j, x, y, z, y)));
                        // Chains x → i → y → j → z and y → j → x → i → z.
                        beta54[1].add(sq(b5(a, i, j, x, y, y, z)));
                        beta54[1].add(sq(b5(a, i, j, x, y, z, x)));
                        for w in 0..n {
                            if !distinct(&[i, j, x, y, z, w]) {
                                continue;
                            }
                            beta54[2].add(sq(b5(a, i, j, x, y, z, w)));
                        }
                    }
                }
            }
        }
    }
    let two = |t: &[CompensatedSum; 2], hi: f64, lo: f64, den: f64| {
        (hi * t[0].value() + lo * t[1].value()) / den
    };
    Ok(BetaSums {
        beta1: two(&beta1, theta * theta, theta, d3),
        beta2: two(&beta2, theta * theta, theta, d3),
        beta3: two(&beta3, theta, 1.0, d3),
        beta4: two(&beta4, theta, 1.0, d3),
        beta51: theta * theta * beta51.value() / d4,
        beta52: theta * beta52.value() / d4,
        beta53: theta * beta53.value() / d4,
        beta54: (theta * beta54[0].value() + beta54[1].value() + beta54[2].value()) / d4,
    })
}

/// How E[Y′R] is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum EyrMethod {
    /// Enumerate S_n (n ≤ 8).
    Exact,
    /// Exact via E Y² from pairwise constraint probabilities, O(n⁴).
    SecondMoment,
    MonteCarlo { samples: usize, seed: u64 },
    /// `Exact` when n ≤ 8, otherwise `MonteCarlo`.
    Auto { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyrEstimate {
    pub value: f64,
    pub method: EyrMethod,
    /// 95% half-width, Monte Carlo only.
    pub ci_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub beta1: f64,
    pub beta3: f64,
    pub beta51: f64,
    pub beta52: f64,
    pub beta54: f64,
    pub e_ydiff_sq: f64,
    pub e_yr: EyrEstimate,
    pub sigma_sq: f64,
}

impl VarianceDecomposition {
    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }
}

/// E Y² on centered entries from the two-point constraint probabilities.
pub fn exact_second_moment(exec: Execution, a: &ScoreMatrix, params: &EwensParams) -> f64 {
    let n = a.n();
    let theta = params.theta;
    let s = params.shifted();
    let one = 1.0 / s;
    let two = 1.0 / (s * (s - 1.0));
    let rows = map_indexed(exec, n, |u| {
        let mut acc = CompensatedSum::new();
        for p in 0..n {
            let aup = a.get(u, p);
            let w = if u == p { theta } else { 1.0 };
            acc.add(w * aup * aup * one);
            for v in 0..n {
                if v == u {
                    continue;
                }
                let mut inner = CompensatedSum::new();
                for q in 0..n {
                    if q == p {
                        continue;
                    }
                    let loops = (u == p) as i32 + (v == q) as i32 + (u == q && v == p) as i32;
                    inner.add(theta.powi(loops) * a.get(v, q));
                }
                acc.add(aup * inner.value() * two);
            }
        }
        acc
    });
    let mut total = CompensatedSum::new();
    for r in &rows {
        total.merge(r);
    }
    total.value()
}

fn estimate_eyr(
    exec: Execution,
    a: &ScoreMatrix,
    params: &EwensParams,
    method: EyrMethod,
    e_ydiff_sq: f64,
) -> Result<EyrEstimate> {
    let n = params.n;
    let pairs = (n * (n - 1)) as f64;
    match method {
        EyrMethod::Auto { samples, seed } => {
            let resolved = if n <= crate::oracle::ENUMERATION_CAP {
                EyrMethod::Exact
            } else {
                EyrMethod::MonteCarlo { samples, seed }
            };
            estimate_eyr(exec, a, params, resolved, e_ydiff_sq)
        }
        EyrMethod::Exact => {
            let value = crate::oracle::exact_expectation_with(exec, params, |p| {
                a.statistic(p) * t_statistic(a, p, params)
            })? / pairs;
            Ok(EyrEstimate {
                value,
                method,
                ci_halfwidth: None,
            })
        }
        EyrMethod::SecondMoment => {
            let second = exact_second_moment(exec, a, params);
            Ok(EyrEstimate {
                value: stein_lambda(n) * second - 0.5 * e_ydiff_sq,
                method,
                ci_halfwidth: None,
            })
        }
        EyrMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::TooFewSamples { min: 2, got: samples });
            }
            let blocks = monte_carlo_blocks(exec, samples, seed, 0, |rng, count| {
                let mut acc = MomentAccumulator::default();
                for _ in 0..count {
                    let p = crate::ewens::sample_crp(params, rng);
                    acc.push(a.statistic(&p) * t_statistic(a, &p, params) / pairs);
                }
                acc
            });
            let mut acc = MomentAccumulator::default();
            for b in &blocks {
                acc.merge(b);
            }
            Ok(EyrEstimate {
                value: acc.mean(),
                method,
                ci_halfwidth: Some(acc.ci95_halfwidth()),
            })
        }
    }
}

/// σ² = (n/8) E(Y′−Y″)² + (n/4) E[Y′R], with the first term from the β
/// sums.
pub fn variance_decomposition(
    a: &ScoreMatrix,
    params: &EwensParams,
    method: EyrMethod,
) -> Result<VarianceDecomposition> {
    variance_decomposition_with(Execution::default(), a, params, method)
}

pub fn variance_decomposition_with(
    exec: Execution,
    a: &ScoreMatrix,
    params: &EwensParams,
    method: EyrMethod,
) -> Result<VarianceDecomposition> {
    let betas = beta_sums(exec, a, params)?;
    let e_ydiff_sq = betas.total();
    let e_yr = estimate_eyr(exec, a, params, method, e_ydiff_sq)?;
    let n = params.n as f64;
    let sigma_sq = n / 8.0 * e_ydiff_sq + n / 4.0 * e_yr.value;
    let floor = 1e-12 * (n * a.max_abs()).powi(2);
    if !(sigma_sq > floor) {
        return Err(Error::DegenerateVariance(sigma_sq));
    }
    Ok(VarianceDecomposition {
        beta1: betas.beta1,
        beta3: betas.beta3,
        beta51: betas.beta51,
        beta52: betas.beta52,
        beta54: betas.beta54,
        e_ydiff_sq,
        e_yr,
        sigma_sq,
    })
}

/// Upper bounds on E|R| and |E Y′R| in terms of θ, n, M and σ.
pub fn remainder_bounds(params: &EwensParams, m: f64, sigma: f64) -> Result<(f64, f64)> {
    require_min_n(params.n)?;
    let theta = params.theta;
    let n = params.n as f64;
    let s = params.shifted();
    let k1 = kappa1(params);
    let k2 = kappa2(params);
    let e_abs_r = theta * m * (12.0 * n + 8.0 * theta - 10.0) / ((n - 1.0) * s)
        + 2.0 * theta * theta * m / falling_factorial(s, 2);
    let e_yr = (10.0 * k1 + 4.0 * theta + 4.0 * (k1 * (theta + 1.0) + k2) / n) * m * sigma
        / (n - 1.0);
    Ok((e_abs_r, e_yr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RawMatrix;

    fn params(theta: f64, n: usize) -> EwensParams {
        EwensParams::new(theta, n).unwrap()
    }

    fn test_matrix(n: usize, theta: f64) -> ScoreMatrix {
        let raw = RawMatrix::from_fn(n, |i, j| ((3 * i + 5 * j + i * j) % 7) as f64 / 3.0)
            .symmetrize();
        ScoreMatrix::center(&raw, &params(theta, n)).unwrap()
    }

    #[test]
    fn classify_examples() {
        let p = Permutation::from_cycle_notation(6, "(1)(2)(3 4)(5 6)").unwrap();
        assert_eq!(classify(0, 1, &p).unwrap(), CaseLabel::A0_1);
        assert_eq!(classify(2, 3, &p).unwrap(), CaseLabel::A0_2);
        assert_eq!(classify(2, 4, &p).unwrap(), CaseLabel::A5_1);
        assert_eq!(classify(0, 2, &p).unwrap(), CaseLabel::A1);
        assert_eq!(classify(2, 0, &p).unwrap(), CaseLabel::A2);
        assert!(classify(1, 1, &p).is_err());
        let q = Permutation::from_cycle_notation(6, "(1 2 3)(4 5 6)").unwrap();
        assert_eq!(classify(0, 1, &q).unwrap(), CaseLabel::A3);
        assert_eq!(classify(1, 0, &q).unwrap(), CaseLabel::A4);
        assert_eq!(classify(0, 3, &q).unwrap(), CaseLabel::A5_4);
    }

    #[test]
    fn b_value_rejects_wrong_case() {
        let a = test_matrix(6, 1.0);
        assert_eq!(b_value(0, 1, 0, 1, 0, 1, CaseLabel::A0_1, &a).unwrap(), 0.0);
        assert!(b_value(0, 1, 0, 1, 0, 1, CaseLabel::A1, &a).is_err());
        assert!(b_value(0, 1, 2, 2, 3, 4, CaseLabel::A5_4, &a).is_err());
    }

    #[test]
    fn t_statistic_on_derangement() {
        let p = params(1.7, 6);
        let a = test_matrix(6, 1.7);
        let perm = Permutation::from_cycle_notation(6, "(1 2 3)(4 5 6)").unwrap();
        let trace: f64 = (0..6).map(|x| a.get(x, x)).sum();
        assert!((t_statistic(&a, &perm, &p) + 4.0 * 1.7 * trace).abs() < 1e-12);
        let zero = ScoreMatrix::center(&RawMatrix::constant(6, 0.0), &p).unwrap();
        assert_eq!(t_statistic(&zero, &perm, &p), 0.0);
    }

    #[test]
    fn shape_probabilities_sum_to_one() {
        for &theta in &[0.3, 1.0, 4.0] {
            for n in [6usize, 9, 20] {
                let p = params(theta, n);
                let total: f64 = SHAPES
                    .iter()
                    .map(|s| s.probability(&p) * falling_factorial((n - 2) as f64, s.weights.len()))
                    .sum();
                assert!((total - 1.0).abs() < 1e-12, "theta {theta} n {n}: {total}");
            }
        }
    }

    #[test]
    fn tuple_square_sum_matches_brute_force() {
        let d = [0.3, -1.2, 0.7, 2.0, -0.4];
        let (p1, p2) = (d.iter().sum::<f64>(), d.iter().map(|x| x * x).sum::<f64>());
        let c = 0.9;
        let w = [1.0, -2.0, 0.5];
        let mut brute = 0.0;
        for x in 0..5 {
            for y in 0..5 {
                for z in 0..5 {
                    if x != y && y != z && x != z {
                        let b = c + w[0] * d[x] + w[1] * d[y] + w[2] * d[z];
                        brute += b * b;
                    }
                }
            }
        }
        assert!((tuple_square_sum(c, &w, p1, p2, 5) - brute).abs() < 1e-10);
    }

    #[test]
    fn closed_form_betas_match_direct_sums() {
        for &theta in &[0.5, 2.0] {
            for n in [6usize, 7] {
                let p = params(theta, n);
                let a = test_matrix(n, theta);
                let fast = beta_sums(Execution::Sequential, &a, &p).unwrap();
                let slow = beta_sums_direct(&a, &p).unwrap();
                for (x, y) in [
                    (fast.beta1, slow.beta1),
                    (fast.beta2, slow.beta2),
                    (fast.beta3, slow.beta3),
                    (fast.beta4, slow.beta4),
                    (fast.beta51, slow.beta51),
                    (fast.beta52, slow.beta52),
                    (fast.beta53, slow.beta53),
                    (fast.beta54, slow.beta54),
                ] {
                    assert!((x - y).abs() <= 1e-11 * (1.0 + y.abs()), "{x} vs {y}");
                }
                assert!((fast.total() - fast.folded_total()).abs() < 1e-11 * fast.total());
            }
        }
    }

    #[test]
    fn small_n_is_rejected() {
        let p = params(1.0, 5);
        let a = test_matrix(5, 1.0);
        assert_eq!(
            variance_decomposition(&a, &p, EyrMethod::Exact).unwrap_err(),
            Error::TooSmall(5)
        );
        assert!(remainder_bounds(&p, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let p = params(1.0, 6);
        let a = ScoreMatrix::center(&RawMatrix::constant(6, 0.0), &p).unwrap();
        let betas = beta_sums(Execution::Sequential, &a, &p).unwrap();
        assert_eq!(betas.total(), 0.0);
        assert!(matches!(
            variance_decomposition(&a, &p, EyrMethod::Exact),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn remainder_bounds_are_linear_in_m() {
        let p = params(1.5, 10);
        assert_eq!(remainder_bounds(&p, 0.0, 2.0).unwrap(), (0.0, 0.0));
        let (r1, y1) = remainder_bounds(&p, 1.0, 2.0).unwrap();
        let (r3, y3) = remainder_bounds(&p, 3.0, 2.0).unwrap();
        assert!((r3 - 3.0 * r1).abs() < 1e-12 && (y3 - 3.0 * y1).abs() < 1e-12);
    }

    #[test]
    fn eyr_routes_agree() {
        let p = params(1.3, 7);
        let a = test_matrix(7, 1.3);
        let exact = variance_decomposition(&a, &p, EyrMethod::Exact).unwrap();
        let second = variance_decomposition(&a, &p, EyrMethod::SecondMoment).unwrap();
        assert!((exact.sigma_sq - second.sigma_sq).abs() < 1e-10 * exact.sigma_sq);
        let mc = variance_decomposition(
            &a,
            &p,
            EyrMethod::MonteCarlo {
                samples: 200_000,
                seed: 3,
            },
        )
        .unwrap();
        let ci = mc.e_yr.ci_halfwidth.unwrap();
        assert!((mc.e_yr.value - exact.e_yr.value).abs() < 2.0 * ci + 1e-12);
    }
}
