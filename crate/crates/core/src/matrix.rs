//! Score matrices: raw input and the centered form used by every Stein
//! computation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ewens::EwensParams;
use crate::perm::Permutation;

/// A square matrix of raw scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RawMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("matrix has no rows".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (row, values) in rows.into_iter().enumerate() {
            if values.len() != n {
                return Err(Error::NotSquare {
                    row: row + 1,
                    len: values.len(),
                    n,
                });
            }
            if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
                return Err(Error::Parse(format!("non-finite entry {bad} in row {}", row + 1)));
            }
            entries.extend(values);
        }
        Ok(Self { n, entries })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self { n, entries }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self::from_fn(n, |_, _| value)
    }

    /// `n` lines of `n` comma-separated decimals, no header. Blank lines are
    /// ignored.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(col, field)| {
                    field.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!(
                            "line {}, field {}: {:?}: {e}",
                            line_no + 1,
                            col + 1,
                            field.trim()
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }

    /// A JSON array of arrays.
    pub fn parse_json(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// (A + Aᵀ)/2.
    pub fn symmetrize(&self) -> Self {
        Self::from_fn(self.n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i)))
    }

    pub fn check_symmetric(&self) -> Result<()> {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (a_ij, a_ji) = (self.get(i, j), self.get(j, i));
                if a_ij != a_ji {
                    return Err(Error::Asymmetric {
                        i: i + 1,
                        j: j + 1,
                        a_ij,
                        a_ji,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_integer(&self) -> bool {
        self.entries.iter().all(|x| x.round() == *x)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|x| c * x).collect(),
        }
    }

    /// Σ_i a_{i,π(i)} on the raw entries.
    pub fn statistic(&self, perm: &Permutation) -> f64 {
        (0..self.n).map(|i| self.get(i, perm.image(i))).sum()
    }
}

impl Serialize for RawMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RawMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        RawMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// a•• = (θ Σ a_ii + Σ_{i≠j} a_ij) / (n(θ+n−1)), the Ewens mean of a single
/// entry a_{I,π(I)}.
pub fn grand_mean(a: &RawMatrix, params: &EwensParams) -> Result<f64> {
    a.check_symmetric()?;
    if a.n() != params.n {
        return Err(Error::DimensionMismatch {
            expected: params.n,
            got: a.n(),
        });
    }
    Ok(weighted_mean(a.n(), params.theta, |i, j| a.get(i, j)))
}

fn weighted_mean(n: usize, theta: f64, entry: impl Fn(usize, usize) -> f64) -> f64 {
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                diag += entry(i, i);
            } else {
                off += entry(i, j);
            }
        }
    }
    (theta * diag + off) / (n as f64 * (theta + n as f64 - 1.0))
}

/// A symmetric score matrix centered for a given θ.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    raw: RawMatrix,
    centered: Vec<f64>,
    grand_mean: f64,
    max_abs: f64,
    theta: f64,
    is_integer: bool,
}

impl ScoreMatrix {
    /// Centers `a` so that its θ-weighted grand mean vanishes.
    pub fn center(a: &RawMatrix, params: &EwensParams) -> Result<Self> {
        let grand_mean = grand_mean(a, params)?;
        let centered: Vec<f64> = a.entries.iter().map(|x| x - grand_mean).collect();
        let max_abs = centered.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        Ok(Self {
            raw: a.clone(),
            centered,
            grand_mean,
            max_abs,
            theta: params.theta,
            is_integer: a.is_integer(),
        })
    }

    pub fn n(&self) -> usize {
        self.raw.n
    }

    /// Centered entry â_{i,j}.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.centered[i * self.raw.n + j]
    }

    pub fn raw(&self) -> &RawMatrix {
        &self.raw
    }

    pub fn grand_mean(&self) -> f64 {
        self.grand_mean
    }

    /// E Y on the raw entries, n·a••.
    pub fn raw_mean(&self) -> f64 {
        self.raw.n as f64 * self.grand_mean
    }

    /// M = max |â_{i,j}|.
    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_integer(&self) -> bool {
        self.is_integer
    }

    /// θ-weighted grand mean of the centered entries; zero up to rounding.
    pub fn centered_grand_mean(&self) -> f64 {
        weighted_mean(self.n(), self.theta, |i, j| self.get(i, j))
    }

    pub fn centered_rows(&self) -> Vec<Vec<f64>> {
        self.centered.chunks(self.n()).map(|r| r.to_vec()).collect()
    }

    /// Y = Σ_i â_{i,π(i)}.
    pub fn statistic(&self, perm: &Permutation) -> f64 {
        (0..self.n()).map(|i| self.get(i, perm.image(i))).sum()
    }

    /// Y on the raw entries.
    pub fn raw_statistic(&self, perm: &Permutation) -> f64 {
        self.raw.statistic(perm)
    }

    pub(crate) fn check_params(&self, params: &EwensParams) -> Result<()> {
        if self.n() != params.n {
            return Err(Error::DimensionMismatch {
                expected: params.n,
                got: self.n(),
            });
        }
        if self.theta != params.theta {
            return Err(Error::InvalidParameter(format!(
                "matrix was centered for theta = {} but theta = {} was requested",
                self.theta, params.theta
            )));
        }
        Ok(())
    }
}
