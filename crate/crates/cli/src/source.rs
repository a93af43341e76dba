//! Where the score matrix comes from: a file or a seeded generator.

use std::path::Path;
use std::str::FromStr;

use ewens_stein::RawMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    /// i.i.d. uniform [0, 1) entries on and above the diagonal.
    Uniform01,
    /// i.i.d. integers in `lo..=hi` on and above the diagonal.
    IntegerRange { lo: i64, hi: i64 },
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split(':');
        match parts.next() {
            Some("uniform01") if parts.next().is_none() => Ok(Generator::Uniform01),
            Some("integer-range") => {
                let rest: Vec<&str> = parts.collect();
                let (lo, hi) = match rest.as_slice() {
                    [] => (0, 9),
                    [lo, hi] => (
                        lo.parse().map_err(|e| format!("bad lower end {lo:?}: {e}"))?,
                        hi.parse().map_err(|e| format!("bad upper end {hi:?}: {e}"))?,
                    ),
                    _ => return Err("expected integer-range or integer-range:LO:HI".into()),
                };
                if lo > hi {
                    return Err(format!("empty integer range {lo}..={hi}"));
                }
                Ok(Generator::IntegerRange { lo, hi })
            }
            _ => Err(format!(
                "unknown generator {s:?} (expected uniform01 or integer-range[:LO:HI])"
            )),
        }
    }
}

impl Generator {
    pub fn generate(self, n: usize, seed: u64) -> RawMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let x = match self {
                    Generator::Uniform01 => rng.random::<f64>(),
                    Generator::IntegerRange { lo, hi } => rng.random_range(lo..=hi) as f64,
                };
                rows[i][j] = x;
                rows[j][i] = x;
            }
        }
        RawMatrix::from_rows(rows).expect("square by construction")
    }
}

/// Reads a CSV (or `.json`) matrix and checks its size against `n`.
pub fn load(path: &Path, n: usize, symmetrize: bool) -> Result<RawMatrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let raw = if is_json {
        RawMatrix::parse_json(&text)
    } else {
        RawMatrix::parse_csv(&text)
    }
    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if raw.n() != n {
        return Err(CliError::Usage(format!(
            "{} holds a {}×{} matrix but --n is {n}",
            path.display(),
            raw.n(),
            raw.n()
        )));
    }
    let raw = if symmetrize { raw.symmetrize() } else { raw };
    raw.check_symmetric()
        .map_err(|e| CliError::Usage(format!("{e} (pass --symmetrize to use (A + Aᵀ)/2)")))?;
    Ok(raw)
}
