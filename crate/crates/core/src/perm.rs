//! Permutations of `[n]` in one-line form with a lazily cached cycle
//! decomposition.
//!
//! Labels are 0-based inside the API. Everything a user reads or writes
//! (JSON, `Display`, cycle notation) is 1-based.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Structure {
    inverse: Vec<usize>,
    cycle_id: Vec<usize>,
    cycle_len: Vec<usize>,
    cycles: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Permutation {
    images: Vec<usize>,
    structure: OnceLock<Structure>,
}

impl PartialEq for Permutation {
    fn eq(&self, other: &Self) -> bool {
        self.images == other.images
    }
}

impl Eq for Permutation {}

impl std::hash::Hash for Permutation {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.images.hash(state);
    }
}

impl Permutation {
    /// Builds a permutation from 0-based images, rejecting anything that is
    /// not a bijection of `0..images.len()`.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for (pos, &x) in images.iter().enumerate() {
            if x >= n {
                return Err(Error::InvalidPermutation(format!(
                    "image {} at position {} is outside [1, {}]",
                    x + 1,
                    pos + 1,
                    n
                )));
            }
            if seen[x] {
                return Err(Error::InvalidPermutation(format!(
                    "label {} appears more than once (second time at position {})",
                    x + 1,
                    pos + 1
                )));
            }
            seen[x] = true;
        }
        Ok(Self::from_images_unchecked(images))
    }

    pub(crate) fn from_images_unchecked(images: Vec<usize>) -> Self {
        Self {
            images,
            structure: OnceLock::new(),
        }
    }

    /// Builds a permutation from 1-based images.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        let mut zero = Vec::with_capacity(images.len());
        for (pos, &x) in images.iter().enumerate() {
            if x == 0 {
                return Err(Error::InvalidPermutation(format!(
                    "label 0 at position {} (labels are 1-based)",
                    pos + 1
                )));
            }
            zero.push(x - 1);
        }
        Self::new(zero)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_images_unchecked((0..n).collect())
    }

    /// Builds a permutation of `0..n` from 0-based cycles; unlisted labels
    /// are fixed points.
    pub fn from_cycles(n: usize, cycles: &[Vec<usize>]) -> Result<Self> {
        let mut images: Vec<usize> = (0..n).collect();
        let mut used = vec![false; n];
        for cycle in cycles {
            for (t, &x) in cycle.iter().enumerate() {
                if x >= n || used[x] {
                    return Err(Error::InvalidPermutation(format!(
                        "label {} is out of range or repeated in cycle notation",
                        x + 1
                    )));
                }
                used[x] = true;
                images[x] = cycle[(t + 1) % cycle.len()];
            }
        }
        Ok(Self::from_images_unchecked(images))
    }

    /// Parses 1-based cycle notation such as `(1)(2435)` or `(1)(2 4 3 5)`.
    /// Multi-digit labels need whitespace or commas between them.
    pub fn from_cycle_notation(n: usize, text: &str) -> Result<Self> {
        let mut cycles = Vec::new();
        let mut rest = text.trim();
        while !rest.is_empty() {
            let open = rest
                .strip_prefix('(')
                .ok_or_else(|| Error::Parse(format!("expected '(' in {text:?}")))?;
            let close = open
                .find(')')
                .ok_or_else(|| Error::Parse(format!("unclosed cycle in {text:?}")))?;
            let body = &open[..close];
            let labels: Vec<usize> = if body.contains(|c: char| c == ' ' || c == ',') {
                body.split(|c: char| c == ' ' || c == ',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse(e.to_string()))?
            } else {
                body.chars()
                    .map(|c| {
                        c.to_digit(10)
                            .map(|d| d as usize)
                            .ok_or_else(|| Error::Parse(format!("bad label {c:?}")))
                    })
                    .collect::<Result<_>>()?
            };
            if labels.contains(&0) {
                return Err(Error::Parse("labels are 1-based".into()));
            }
            cycles.push(labels.into_iter().map(|x| x - 1).collect());
            rest = open[close + 1..].trim_start();
        }
        Self::from_cycles(n, &cycles)
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    /// π(i).
    #[inline]
    pub fn image(&self, i: usize) -> usize {
        self.images[i]
    }

    /// π⁻¹(i).
    #[inline]
    pub fn preimage(&self, i: usize) -> usize {
        self.structure().inverse[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn into_images(self) -> Vec<usize> {
        self.images
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.images.iter().map(|x| x + 1).collect()
    }

    pub fn inverse(&self) -> Permutation {
        Self::from_images_unchecked(self.structure().inverse.clone())
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.n(), other.n());
        Self::from_images_unchecked(other.images.iter().map(|&x| self.images[x]).collect())
    }

    /// τ_{i,j} π τ_{i,j}: relabels `i` and `j` in the cycle representation.
    pub fn conjugate_by_transposition(&self, i: usize, j: usize) -> Permutation {
        let swap = |x: usize| {
            if x == i {
                j
            } else if x == j {
                i
            } else {
                x
            }
        };
        let images = (0..self.n())
            .map(|x| swap(self.images[swap(x)]))
            .collect();
        Self::from_images_unchecked(images)
    }

    fn structure(&self) -> &Structure {
        self.structure.get_or_init(|| {
            let n = self.images.len();
            let mut inverse = vec![0; n];
            for (x, &y) in self.images.iter().enumerate() {
                inverse[y] = x;
            }
            let mut cycle_id = vec![usize::MAX; n];
            let mut cycle_len = vec![0; n];
            let mut cycles = Vec::new();
            for start in 0..n {
                if cycle_id[start] != usize::MAX {
                    continue;
                }
                let id = cycles.len();
                let mut cycle = Vec::new();
                let mut x = start;
                while cycle_id[x] == usize::MAX {
                    cycle_id[x] = id;
                    cycle.push(x);
                    x = self.images[x];
                }
                for &x in &cycle {
                    cycle_len[x] = cycle.len();
                }
                cycles.push(cycle);
            }
            Structure {
                inverse,
                cycle_id,
                cycle_len,
                cycles,
            }
        })
    }

    /// Cycles, each starting at its smallest label, ordered by that label.
    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.structure().cycles
    }

    /// #(π).
    pub fn cycle_count(&self) -> usize {
        self.structure().cycles.len()
    }

    /// |i|, the length of the cycle containing `i`.
    #[inline]
    pub fn cycle_len(&self, i: usize) -> usize {
        self.structure().cycle_len[i]
    }

    /// i ∼ j.
    pub fn same_cycle(&self, i: usize, j: usize) -> bool {
        let s = self.structure();
        s.cycle_id[i] == s.cycle_id[j]
    }

    /// c₁(π).
    pub fn fixed_points(&self) -> usize {
        self.images.iter().enumerate().filter(|(i, &x)| *i == x).count()
    }

    pub fn cycle_type(&self) -> CycleType {
        let mut counts = vec![0; self.n()];
        for c in self.cycles() {
            counts[c.len() - 1] += 1;
        }
        CycleType { counts }
    }

    /// σ∖B: delete the labels of `b` from the cycle representation.
    pub fn delete(&self, b: &[usize]) -> SubsetPermutation {
        let n = self.n();
        let mut removed = vec![false; n];
        for &x in b {
            removed[x] = true;
        }
        let mut images = vec![None; n];
        for x in 0..n {
            if removed[x] {
                continue;
            }
            let mut y = self.images[x];
            while removed[y] {
                y = self.images[y];
            }
            images[x] = Some(y);
        }
        SubsetPermutation { images }
    }

    /// σ_B: keep only the cycles lying entirely inside `b`.
    pub fn restrict_cycles(&self, b: &[usize]) -> SubsetPermutation {
        let n = self.n();
        let mut inside = vec![false; n];
        for &x in b {
            inside[x] = true;
        }
        let mut images = vec![None; n];
        for cycle in self.cycles() {
            if cycle.iter().all(|&x| inside[x]) {
                for &x in cycle {
                    images[x] = Some(self.images[x]);
                }
            }
        }
        SubsetPermutation { images }
    }
}

fn write_cycles(f: &mut fmt::Formatter<'_>, cycles: &[Vec<usize>], wide: bool) -> fmt::Result {
    if cycles.is_empty() {
        return write!(f, "()");
    }
    for cycle in cycles {
        write!(f, "(")?;
        for (t, x) in cycle.iter().enumerate() {
            if wide && t > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", x + 1)?;
        }
        write!(f, ")")?;
    }
    Ok(())
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_cycles(f, self.cycles(), self.n() > 9)
    }
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let images = Vec::<usize>::deserialize(deserializer)?;
        Permutation::from_one_based(&images).map_err(serde::de::Error::custom)
    }
}

/// A bijection of a subset of `[n]` onto itself, keeping the original
/// labels. Produced by [`Permutation::delete`] and
/// [`Permutation::restrict_cycles`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPermutation {
    images: Vec<Option<usize>>,
}

impl SubsetPermutation {
    pub fn universe(&self) -> usize {
        self.images.len()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.images.len())
            .filter(|&x| self.images[x].is_some())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.images.iter().filter(|x| x.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, x: usize) -> Option<usize> {
        self.images[x]
    }

    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.images.len();
        let mut seen = vec![false; n];
        let mut cycles = Vec::new();
        for start in 0..n {
            if seen[start] || self.images[start].is_none() {
                continue;
            }
            let mut cycle = Vec::new();
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                cycle.push(x);
                x = self.images[x].expect("subset permutation is closed");
            }
            cycles.push(cycle);
        }
        cycles
    }

    pub fn cycle_count(&self) -> usize {
        self.cycles().len()
    }
}

impl fmt::Display for SubsetPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_cycles(f, &self.cycles(), self.universe() > 9)
    }
}

/// Cycle counts `(c₁, …, c_n)`; `counts[q - 1]` is the number of q-cycles.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CycleType {
    pub counts: Vec<usize>,
}

impl CycleType {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// c_q for 1-based `q`.
    pub fn count(&self, q: usize) -> usize {
        self.counts.get(q.wrapping_sub(1)).copied().unwrap_or(0)
    }

    /// Σ q·c_q.
    pub fn weight(&self) -> usize {
        self.counts
            .iter()
            .enumerate()
            .map(|(q, &c)| (q + 1) * c)
            .sum()
    }

    pub fn is_consistent(&self) -> bool {
        self.weight() == self.n()
    }

    pub fn total_cycles(&self) -> usize {
        self.counts.iter().sum()
    }
}
