//! Self-checks that compare the closed forms against exhaustive enumeration
//! on small n.

use std::collections::HashMap;

use clap::ValueEnum;
use ewens_stein::bounds::{bound_report, BoundOptions};
use ewens_stein::comb::{b_value_at, exact_remainder, stein_lambda, t_statistic, EyrMethod, MIN_N};
use ewens_stein::coupling::CouplingSampler;
use ewens_stein::ewens::{c1_moments, cycle_count_factorial_moment, cycle_type_pmf, ewens_pmf};
use ewens_stein::oracle::{
    enumerate_permutations, exact_square_bias_law, exact_statistic_law, ENUMERATION_CAP,
    JOINT_ENUMERATION_CAP,
};
use ewens_stein::par::{CompensatedSum, Execution};
use ewens_stein::{CycleType, Error, EwensParams, Permutation, ScoreMatrix};
use serde::Serialize;

use crate::source::Generator;
use crate::{CliError, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Ewens,
    Moments,
    SteinIdentity,
    SquareBias,
    ZeroBiasIdentity,
    Bounds,
}

impl Suite {
    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub n: usize,
    pub theta: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(self).expect("serializable"),
            Format::Csv => {
                let mut s = String::from("suite,check,value,tolerance,passed");
                for c in &self.checks {
                    s.push_str(&format!(
                        "\n{},{},{},{},{}",
                        self.suite, c.name, c.value, c.tolerance, c.passed
                    ));
                }
                s
            }
        }
    }
}

fn check(name: &str, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn perms(n: usize) -> Result<Vec<Permutation>, CliError> {
    Ok(enumerate_permutations(n)?.collect())
}

fn thetas_with(theta: f64) -> Vec<f64> {
    let mut out = vec![0.5, 1.0, 2.0, 5.0];
    if !out.contains(&theta) {
        out.push(theta);
    }
    out
}

fn require_range(n: usize, cap: usize) -> Result<(), CliError> {
    if n < MIN_N {
        return Err(Error::TooSmall(n).into());
    }
    if n > cap {
        return Err(Error::EnumerationCap { n, cap }.into());
    }
    Ok(())
}

pub fn run(
    suite: Suite,
    n: usize,
    theta: f64,
    seed: u64,
    generator: Generator,
) -> Result<SuiteReport, CliError> {
    let params = EwensParams::new(theta, n)?;
    let matrices = |count: u64| -> Result<Vec<ScoreMatrix>, CliError> {
        (0..count)
            .map(|t| Ok(ScoreMatrix::center(&generator.generate(n, seed + t), &params)?))
            .collect()
    };
    let checks = match suite {
        Suite::Ewens => ewens(n, theta)?,
        Suite::Moments => moments(n, theta)?,
        Suite::SteinIdentity => {
            require_range(n, ENUMERATION_CAP)?;
            stein_identity(&params, &matrices(5)?)?
        }
        Suite::SquareBias => {
            require_range(n, JOINT_ENUMERATION_CAP)?;
            square_bias(&params, &matrices(3)?)?
        }
        Suite::ZeroBiasIdentity => {
            require_range(n, JOINT_ENUMERATION_CAP)?;
            zero_bias_identity(&params, &matrices(3)?)?
        }
        Suite::Bounds => {
            require_range(n, ENUMERATION_CAP)?;
            bounds(&params, seed, generator)?
        }
    };
    Ok(SuiteReport {
        suite: suite.name(),
        n,
        theta,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn ewens(n: usize, theta: f64) -> Result<Vec<Check>, CliError> {
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { n, cap: ENUMERATION_CAP }.into());
    }
    let (mut mass, mut uniform, mut types) = (0.0f64, 0.0f64, 0.0f64);
    for m in 1..=n {
        let all = perms(m)?;
        for t in thetas_with(theta) {
            let p = EwensParams::new(t, m)?;
            let total: CompensatedSum = all.iter().map(|q| ewens_pmf(q, &p).expect("sized")).collect();
            mass = mass.max((total.value() - 1.0).abs());
            let mut by_type: HashMap<Vec<usize>, f64> = HashMap::new();
            for q in &all {
                *by_type.entry(q.cycle_type().counts).or_default() += ewens_pmf(q, &p)?;
            }
            for (counts, v) in by_type {
                types = types.max(rel_err(cycle_type_pmf(&CycleType::new(counts), &p), v, 0.0));
            }
        }
        let p = EwensParams::new(1.0, m)?;
        let target = 1.0 / (1..=m).map(|k| k as f64).product::<f64>();
        for q in &all {
            uniform = uniform.max(rel_err(ewens_pmf(q, &p)?, target, 0.0));
        }
    }
    Ok(vec![
        check("pmf_total_mass_error", mass, 1e-12),
        check("uniform_pmf_relative_error", uniform, 1e-14),
        check("cycle_type_pmf_relative_error", types, 1e-12),
    ])
}

fn moments(n: usize, theta: f64) -> Result<Vec<Check>, CliError> {
    let all = perms(n)?;
    let orders: [&[usize]; 5] = [&[1, 1], &[2, 0, 1], &[0, 2], &[1, 0, 0, 1], &[3, 1]];
    let (mut c1_err, mut joint_err) = (0.0f64, 0.0f64);
    for t in thetas_with(theta) {
        let p = EwensParams::new(t, n)?;
        let mut sums = [CompensatedSum::new(); 4];
        let mut joint = [CompensatedSum::new(); 5];
        for q in &all {
            let w = ewens_pmf(q, &p)?;
            let ct = q.cycle_type();
            let c1 = ct.count(1) as f64;
            sums[0].add(w * c1);
            sums[1].add(w * c1 * (c1 - 1.0));
            sums[2].add(w * c1 * c1);
            sums[3].add(w * c1 * c1 * (c1 - 1.0) * (c1 - 1.0));
            for (acc, m) in joint.iter_mut().zip(orders) {
                let v: f64 = m
                    .iter()
                    .enumerate()
                    .map(|(k, &mk)| (0..mk).map(|s| ct.count(k + 1) as f64 - s as f64).product::<f64>())
                    .product();
                acc.add(w * v);
            }
        }
        let c = c1_moments(&p);
        for (s, v) in sums.iter().zip([c.mean, c.second_factorial, c.second, c.fourth_mixed]) {
            c1_err = c1_err.max(rel_err(s.value(), v, f64::MIN_POSITIVE));
        }
        for (s, m) in joint.iter().zip(orders) {
            joint_err = joint_err.max(rel_err(s.value(), cycle_count_factorial_moment(m, &p), f64::MIN_POSITIVE));
        }
    }
    Ok(vec![
        check("fixed_point_moments_relative_error", c1_err, 1e-12),
        check("joint_factorial_moments_relative_error", joint_err, 1e-12),
    ])
}

fn stein_identity(params: &EwensParams, matrices: &[ScoreMatrix]) -> Result<Vec<Check>, CliError> {
    let n = params.n;
    let all = perms(n)?;
    let (mut identity, mut mean_t) = (0.0f64, 0.0f64);
    for a in matrices {
        let scale = (n * n) as f64 * a.max_abs();
        let mut e_t = CompensatedSum::new();
        for q in &all {
            let mut sum = CompensatedSum::new();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        sum.add(b_value_at(a, q, i, j)?);
                    }
                }
            }
            let t = t_statistic(a, q, params);
            let rhs = 4.0 * (n as f64 - 1.0) * a.statistic(q) - t;
            identity = identity.max(rel_err(sum.value(), rhs, scale));
            e_t.add(ewens_pmf(q, params)? * t);
        }
        mean_t = mean_t.max(e_t.value().abs() / scale);
    }
    Ok(vec![
        check("pair_sum_identity_relative_error", identity, 1e-9),
        check("remainder_mean_over_n2m", mean_t, 1e-10),
    ])
}

fn square_bias(params: &EwensParams, matrices: &[ScoreMatrix]) -> Result<Vec<Check>, CliError> {
    let mut tv = 0.0f64;
    for a in matrices {
        let sampler = CouplingSampler::new(Execution::default(), a, params)?;
        tv = tv.max(sampler.exact_law()?.total_variation(&exact_square_bias_law(a, params)?));
    }
    Ok(vec![check("sampler_vs_square_bias_tv", tv, 1e-8)])
}

fn zero_bias_identity(params: &EwensParams, matrices: &[ScoreMatrix]) -> Result<Vec<Check>, CliError> {
    let n = params.n;
    let lambda = stein_lambda(n);
    let fs: [(fn(f64) -> f64, fn(f64) -> f64); 3] = [
        (|y| y * y, |y| 2.0 * y),
        (|y| y * y * y, |y| 3.0 * y * y),
        (|y| y.powi(4), |y| 4.0 * y * y * y),
    ];
    let (mut worst, mut diff2) = (0.0f64, 0.0f64);
    for a in matrices {
        let law = CouplingSampler::new(Execution::default(), a, params)?.exact_law()?;
        let rem = exact_remainder(a, params)?;
        let sigma_sq = exact_statistic_law(a, params)?.variance();
        let e_yr = rem.e_yr();
        for (f, df) in fs {
            let lhs: f64 = rem.atoms.iter().map(|&(y, w, _)| w * y * f(y)).sum();
            let e_fprime = law.expect(|y1, y2| {
                if (y1 - y2).abs() <= 1e-12 {
                    df(y1)
                } else {
                    (f(y1) - f(y2)) / (y1 - y2)
                }
            });
            let rhs = (sigma_sq - e_yr / lambda) * e_fprime + rem.e_r_times(f) / lambda;
            worst = worst.max(rel_err(lhs, rhs, 0.0));
        }
        let pair = ewens_stein::oracle::exact_stein_pair_law(a, params)?;
        let lhs = pair.expect(|x, y| (x - y) * (x - y));
        diff2 = diff2.max(rel_err(lhs, 2.0 * (lambda * sigma_sq - e_yr), 0.0));
    }
    Ok(vec![
        check("polynomial_identity_relative_error", worst, 1e-8),
        check("square_difference_relative_error", diff2, 1e-8),
    ])
}

fn bounds(params: &EwensParams, seed: u64, generator: Generator) -> Result<Vec<Check>, CliError> {
    let options = BoundOptions {
        eyr: EyrMethod::Exact,
        exact: true,
        ..BoundOptions::default()
    };
    let (mut upper, mut lower) = (0usize, 0usize);
    for t in 0..20u64 {
        let raw = if t % 2 == 0 {
            generator.generate(params.n, seed + t)
        } else {
            Generator::IntegerRange { lo: -4, hi: 6 }.generate(params.n, seed + t)
        };
        let r = bound_report(&raw, params, &options)?;
        let (d1, dinf) = (r.d1_exact.expect("exact"), r.dinf_exact.expect("exact"));
        if d1 > r.d1_upper || dinf > r.dinf_upper {
            upper += 1;
        }
        if r.dinf_lower.is_some_and(|lo| lo > dinf) {
            lower += 1;
        }
    }
    Ok(vec![
        check("upper_bound_violations", upper as f64, 0.0),
        check("integer_lower_bound_violations", lower as f64, 0.0),
    ])
}
