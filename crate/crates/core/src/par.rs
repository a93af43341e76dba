//! Deterministic data-parallel helpers.
//!
//! Every parallel loop in the crate goes through [`map_indexed`], which
//! returns results in index order no matter how the work was scheduled.
//! Monte Carlo work is cut into fixed-size blocks and block `b` draws from
//! ChaCha stream `b` of the master seed, so results are bit-identical for
//! any worker count and also when the `parallel` feature is disabled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of Monte Carlo draws per seed stream.
pub const BLOCK_SIZE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses the ambient rayon pool; identical to `Sequential` when the
    /// `parallel` feature is off.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Evaluates `f(0..count)` and returns the results in index order.
pub fn map_indexed<T, F>(exec: Execution, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..count).into_par_iter().map(f).collect()
        }
        _ => (0..count).map(f).collect(),
    }
}

/// RNG for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `samples` draws in blocks of [`BLOCK_SIZE`]; block `b` gets
/// `stream_rng(seed, stream_offset + b)` and the number of draws it owns.
pub fn monte_carlo_blocks<T, F>(
    exec: Execution,
    samples: usize,
    seed: u64,
    stream_offset: u64,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync + Send,
{
    let blocks = samples.div_ceil(BLOCK_SIZE);
    map_indexed(exec, blocks, |b| {
        let mut rng = stream_rng(seed, stream_offset + b as u64);
        let count = BLOCK_SIZE.min(samples - b * BLOCK_SIZE);
        f(&mut rng, count)
    })
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Running mean/variance accumulator with compensated first and second sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAccumulator {
    pub count: usize,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.mean();
        ((self.sum_sq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Half-width of the normal-theory 95% interval for the mean.
    pub fn ci95_halfwidth(&self) -> f64 {
        1.959963984540054 * (self.variance() / self.count as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn blocks_cover_all_samples_in_order() {
        let counts = monte_carlo_blocks(Execution::default(), 10_000, 1, 0, |_, c| c);
        assert_eq!(counts, vec![4096, 4096, 1808]);
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let run = |exec| {
            monte_carlo_blocks(exec, 20_000, 9, 3, |rng, c| {
                (0..c).map(|_| rng.random::<f64>()).sum::<f64>()
            })
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
    }
}
