//! Brute-force computations over all of S_n. Slow, simple, and independent
//! of the samplers and closed forms they are used to check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ewens::{ewens_pmf, EwensParams};
use crate::matrix::ScoreMatrix;
use crate::par::{map_indexed, CompensatedSum, Execution};
use crate::perm::Permutation;

/// Largest n for which S_n is enumerated.
pub const ENUMERATION_CAP: usize = 8;
/// Largest n for the joint enumeration over permutations and index pairs.
pub const JOINT_ENUMERATION_CAP: usize = 6;
/// Values closer than this are treated as one atom.
pub const ATOM_TOLERANCE: f64 = 1e-12;

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n == 0 || n > cap {
        return Err(Error::EnumerationCap { n, cap });
    }
    Ok(())
}

/// Lexicographic walk over S_n.
#[derive(Debug, Clone)]
pub struct PermutationIter {
    next: Option<Vec<usize>>,
}

impl Iterator for PermutationIter {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let n = succ.len();
        if n >= 2 {
            if let Some(k) = (0..n - 1).rev().find(|&k| succ[k] < succ[k + 1]) {
                let l = (k + 1..n).rev().find(|&l| succ[k] < succ[l]).unwrap();
                succ.swap(k, l);
                succ[k + 1..].reverse();
                self.next = Some(succ);
            }
        }
        Some(Permutation::from_images_unchecked(current))
    }
}

/// All n! permutations of `[n]` in lexicographic order of their images.
pub fn enumerate_permutations(n: usize) -> Result<PermutationIter> {
    check_cap(n, ENUMERATION_CAP)?;
    Ok(PermutationIter {
        next: Some((0..n).collect()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub prob: f64,
}

/// A finitely supported law on the line, atoms sorted by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscreteLaw {
    atoms: Vec<Atom>,
}

impl DiscreteLaw {
    /// Sorts, then merges values within [`ATOM_TOLERANCE`] of the first
    /// value of their group. Masses are accumulated in input order.
    pub fn from_weighted(mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<Atom> = Vec::new();
        let mut sums: Vec<CompensatedSum> = Vec::new();
        for (value, prob) in points {
            match atoms.last() {
                Some(last) if (value - last.value).abs() <= ATOM_TOLERANCE => {
                    sums.last_mut().unwrap().add(prob);
                }
                _ => {
                    atoms.push(Atom { value, prob: 0.0 });
                    let mut s = CompensatedSum::new();
                    s.add(prob);
                    sums.push(s);
                }
            }
        }
        for (atom, s) in atoms.iter_mut().zip(&sums) {
            atom.prob = s.value();
        }
        Self { atoms }
    }

    /// Equal mass on each sample.
    pub fn empirical(samples: &[f64]) -> Self {
        let w = 1.0 / samples.len() as f64;
        Self::from_weighted(samples.iter().map(|&x| (x, w)).collect())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).collect::<CompensatedSum>().value()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * f(a.value))
            .collect::<CompensatedSum>()
            .value()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    /// ½ Σ |p − q| after matching atoms within [`ATOM_TOLERANCE`].
    pub fn total_variation(&self, other: &DiscreteLaw) -> f64 {
        let mut tagged: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .map(|a| (a.value, a.prob))
            .chain(other.atoms.iter().map(|a| (a.value, -a.prob)))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let mut start = f64::NAN;
        let mut group = 0.0;
        for (value, signed) in tagged {
            if (value - start).abs() <= ATOM_TOLERANCE {
                group += signed;
            } else {
                total += f64::abs(group);
                start = value;
                group = signed;
            }
        }
        0.5 * (total + group.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairAtom {
    pub first: f64,
    pub second: f64,
    pub prob: f64,
}

/// A finitely supported law on pairs of reals, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairLaw {
    atoms: Vec<PairAtom>,
}

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() <= ATOM_TOLERANCE && (a.1 - b.1).abs() <= ATOM_TOLERANCE
}

fn lex(a: &(f64, f64), b: &(f64, f64)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
}

/// Groups sorted points whose coordinates are within tolerance of the
/// group's first point. Coordinates that are equal up to rounding can sort
/// apart when the first coordinates differ by a few ulps, so each point is
/// matched against every open group whose first coordinate is still close.
fn group_pairs(mut points: Vec<((f64, f64), f64)>) -> Vec<((f64, f64), CompensatedSum)> {
    points.sort_by(|a, b| lex(&a.0, &b.0));
    let mut groups: Vec<((f64, f64), CompensatedSum)> = Vec::new();
    let mut open_from = 0;
    for (key, w) in points {
        while open_from < groups.len() && key.0 - groups[open_from].0 .0 > ATOM_TOLERANCE {
            open_from += 1;
        }
        match groups[open_from..].iter_mut().find(|g| close(g.0, key)) {
            Some(g) => g.1.add(w),
            None => {
                let mut s = CompensatedSum::new();
                s.add(w);
                groups.push((key, s));
            }
        }
    }
    groups
}

impl PairLaw {
    pub fn from_weighted(points: Vec<((f64, f64), f64)>) -> Self {
        let mut atoms: Vec<PairAtom> = group_pairs(points)
            .into_iter()
            .map(|(key, s)| PairAtom {
                first: key.0,
                second: key.1,
                prob: s.value(),
            })
            .collect();
        atoms.sort_by(|a, b| lex(&(a.first, a.second), &(b.first, b.second)));
        Self { atoms }
    }

    pub fn atoms(&self) -> &[PairAtom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).collect::<CompensatedSum>().value()
    }

    pub fn expect(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.prob * f(a.first, a.second))
            .collect::<CompensatedSum>()
            .value()
    }

    /// Rescales to unit mass.
    pub fn normalized(&self) -> Self {
        let total = self.total_mass();
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| PairAtom {
                    prob: a.prob / total,
                    ..*a
                })
                .collect(),
        }
    }

    pub fn first_marginal(&self) -> DiscreteLaw {
        DiscreteLaw::from_weighted(self.atoms.iter().map(|a| (a.first, a.prob)).collect())
    }

    pub fn swapped(&self) -> Self {
        Self::from_weighted(
            self.atoms
                .iter()
                .map(|a| ((a.second, a.first), a.prob))
                .collect(),
        )
    }

    pub fn total_variation(&self, other: &PairLaw) -> f64 {
        let points = self
            .atoms
            .iter()
            .map(|a| ((a.first, a.second), a.prob))
            .chain(other.atoms.iter().map(|a| ((a.first, a.second), -a.prob)))
            .collect();
        0.5 * group_pairs(points)
            .iter()
            .map(|g| g.1.value().abs())
            .sum::<f64>()
    }
}

fn all_permutations(n: usize) -> Result<Vec<Permutation>> {
    Ok(enumerate_permutations(n)?.collect())
}

/// Σ_π g(π) P_θ(π).
pub fn exact_expectation(
    params: &EwensParams,
    g: impl Fn(&Permutation) -> f64 + Sync + Send,
) -> Result<f64> {
    exact_expectation_with(Execution::default(), params, g)
}

pub fn exact_expectation_with(
    exec: Execution,
    params: &EwensParams,
    g: impl Fn(&Permutation) -> f64 + Sync + Send,
) -> Result<f64> {
    let perms = all_permutations(params.n)?;
    let terms = map_indexed(exec, perms.len(), |t| {
        let p = &perms[t];
        g(p) * ewens_pmf(p, params).expect("size checked")
    });
    Ok(terms.into_iter().collect::<CompensatedSum>().value())
}

/// Exact law of Y = Σ a_{i,π(i)} on the raw entries.
pub fn exact_statistic_law(a: &ScoreMatrix, params: &EwensParams) -> Result<DiscreteLaw> {
    exact_statistic_law_with(Execution::default(), a, params)
}

pub fn exact_statistic_law_with(
    exec: Execution,
    a: &ScoreMatrix,
    params: &EwensParams,
) -> Result<DiscreteLaw> {
    a.check_params(params)?;
    let perms = all_permutations(params.n)?;
    let points = map_indexed(exec, perms.len(), |t| {
        let p = &perms[t];
        (a.raw_statistic(p), ewens_pmf(p, params).expect("size checked"))
    });
    Ok(DiscreteLaw::from_weighted(points))
}

/// Exact joint law of (Y′, Y″) for π′ ~ Ewens and (I, J) uniform over
/// ordered distinct pairs, on centered entries.
pub fn exact_stein_pair_law(a: &ScoreMatrix, params: &EwensParams) -> Result<PairLaw> {
    a.check_params(params)?;
    let n = params.n;
    check_cap(n, JOINT_ENUMERATION_CAP)?;
    let pairs = (n * (n - 1)) as f64;
    let mut points = Vec::new();
    for p in enumerate_permutations(n)? {
        let w = ewens_pmf(&p, params)? / pairs;
        let y = a.statistic(&p);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let q = p.conjugate_by_transposition(i, j);
                    points.push(((y, a.statistic(&q)), w));
                }
            }
        }
    }
    Ok(PairLaw::from_weighted(points))
}

/// The square-bias law: the Stein pair law reweighted by
/// (y′ − y″)² / E(Y′ − Y″)², on centered entries.
pub fn exact_square_bias_law(a: &ScoreMatrix, params: &EwensParams) -> Result<PairLaw> {
    let pair = exact_stein_pair_law(a, params)?;
    let weighted: Vec<((f64, f64), f64)> = pair
        .atoms()
        .iter()
        .map(|at| {
            let d = at.first - at.second;
            ((at.first, at.second), at.prob * d * d)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let law = PairLaw::from_weighted(weighted);
    let total = law.total_mass();
    if !(total > 0.0) {
        return Err(Error::DegenerateSquareBias);
    }
    Ok(law.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::RawMatrix;
    use std::collections::HashSet;

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_permutations(1).unwrap().count(), 1);
        let s3: HashSet<_> = enumerate_permutations(3).unwrap().collect();
        assert_eq!(s3.len(), 6);
        assert_eq!(enumerate_permutations(6).unwrap().count(), 720);
        let err = enumerate_permutations(9).unwrap_err();
        assert!(err.to_string().contains("n <= 8"), "{err}");
    }

    #[test]
    fn identity_matrix_law_for_s3() {
        let p = EwensParams::new(1.0, 3).unwrap();
        let a = ScoreMatrix::center(&RawMatrix::from_fn(3, |i, j| (i == j) as u8 as f64), &p)
            .unwrap();
        let law = exact_statistic_law(&a, &p).unwrap();
        let got: Vec<(f64, f64)> = law.atoms().iter().map(|t| (t.value, t.prob)).collect();
        let want = [(0.0, 2.0 / 6.0), (1.0, 3.0 / 6.0), (3.0, 1.0 / 6.0)];
        assert_eq!(got.len(), 3);
        for (g, w) in got.iter().zip(want) {
            assert_eq!(g.0, w.0);
            assert!((g.1 - w.1).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_matrix_is_point_mass() {
        let p = EwensParams::new(2.0, 4).unwrap();
        let a = ScoreMatrix::center(&RawMatrix::constant(4, 0.0), &p).unwrap();
        let law = exact_statistic_law(&a, &p).unwrap();
        assert_eq!(law.atoms().len(), 1);
        assert!((law.atoms()[0].prob - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_square_bias_errors() {
        let p = EwensParams::new(1.0, 5).unwrap();
        let a = ScoreMatrix::center(&RawMatrix::constant(5, 0.0), &p).unwrap();
        assert_eq!(exact_square_bias_law(&a, &p).unwrap_err(), Error::DegenerateSquareBias);
    }

    #[test]
    fn total_variation_matches_tolerant_atoms() {
        let a = DiscreteLaw::from_weighted(vec![(0.0, 0.5), (1.0, 0.5)]);
        let b = DiscreteLaw::from_weighted(vec![(1e-14, 0.25), (1.0, 0.75)]);
        assert!((a.total_variation(&b) - 0.25).abs() < 1e-15);
        assert_eq!(a.total_variation(&a), 0.0);
        let c = DiscreteLaw::from_weighted(vec![(2.0, 1.0)]);
        assert!((a.total_variation(&c) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn law_serializes_as_value_prob_list() {
        let law = DiscreteLaw::from_weighted(vec![(1.0, 0.5), (0.0, 0.5)]);
        assert_eq!(
            serde_json::to_string(&law).unwrap(),
            r#"[{"value":0.0,"prob":0.5},{"value":1.0,"prob":0.5}]"#
        );
    }
}
