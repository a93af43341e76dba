use std::fmt::Write as _;
use std::str::FromStr;

use ewens_stein::bounds::{bound_report, kappa1, kappa2, BoundOptions, BoundReport, CSV_HEADER};
use ewens_stein::comb::EyrMethod;
use ewens_stein::coupling::CouplingSampler;
use ewens_stein::ewens::{
    c1_moments, cycle_count_factorial_moment, cycle_type_pmf, ewens_pmf, sample_crp,
};
use ewens_stein::par::{monte_carlo_blocks, Execution};
use ewens_stein::{CycleType, EwensParams, Permutation, RawMatrix, ScoreMatrix};
use serde_json::json;

use crate::{source, BoundSettings, CliError, EyrChoice, Format, MatrixArgs};

/// Splits on commas and/or whitespace, naming the 1-based position of the
/// first field that does not parse.
fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(pos, field)| {
            field.parse::<T>().map_err(|e| {
                CliError::Usage(format!("invalid {what} {field:?} at position {}: {e}", pos + 1))
            })
        })
        .collect()
}

pub fn parse_grid<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    let values = parse_list(text, what)?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("empty {what} grid")));
    }
    Ok(values)
}

pub fn pmf(
    n: usize,
    theta: f64,
    perm: Option<&str>,
    cycles: Option<&str>,
    ctype: Option<&str>,
    format: Option<Format>,
) -> Result<String, CliError> {
    let params = EwensParams::new(theta, n)?;
    let probability = match (perm, cycles, ctype) {
        (Some(text), _, _) => {
            let images: Vec<usize> = parse_list(text, "label")?;
            if images.len() != n {
                return Err(CliError::Usage(format!(
                    "--perm lists {} labels but --n is {n}",
                    images.len()
                )));
            }
            ewens_pmf(&Permutation::from_one_based(&images)?, &params)?
        }
        (_, Some(text), _) => ewens_pmf(&Permutation::from_cycle_notation(n, text)?, &params)?,
        (_, _, Some(text)) => {
            let mut counts: Vec<usize> = parse_list(text, "cycle count")?;
            if counts.len() > n {
                return Err(CliError::Usage(format!(
                    "--ctype lists {} counts but --n is {n}",
                    counts.len()
                )));
            }
            counts.resize(n, 0);
            cycle_type_pmf(&CycleType::new(counts), &params)
        }
        _ => return Err(CliError::Usage("give one of --perm, --cycles, --ctype".into())),
    };
    Ok(match format {
        Some(Format::Json) => {
            json!({ "n": n, "theta": theta, "probability": probability }).to_string()
        }
        Some(Format::Csv) => format!("n,theta,probability\n{n},{theta},{probability}"),
        None => probability.to_string(),
    })
}

fn matrix_for(n: usize, seed: u64, matrix: &MatrixArgs) -> Result<RawMatrix, CliError> {
    match &matrix.matrix {
        Some(path) => source::load(path, n, matrix.symmetrize),
        None => {
            let raw = matrix.generator.generate(n, matrix.matrix_seed.unwrap_or(seed));
            Ok(if matrix.symmetrize { raw.symmetrize() } else { raw })
        }
    }
}

pub fn sample(
    n: usize,
    theta: f64,
    samples: usize,
    seed: u64,
    coupling: Option<&MatrixArgs>,
    format: Format,
) -> Result<String, CliError> {
    let params = EwensParams::new(theta, n)?;
    let exec = Execution::default();
    let lines: Vec<String> = match coupling {
        None => monte_carlo_blocks(exec, samples, seed, 0, |rng, count| {
            (0..count)
                .map(|_| {
                    let p = sample_crp(&params, rng);
                    match format {
                        Format::Json => serde_json::to_string(&p).expect("serializable"),
                        Format::Csv => p
                            .one_based()
                            .iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(","),
                    }
                })
                .collect::<Vec<_>>()
        })
        .concat(),
        Some(matrix) => {
            let raw = matrix_for(n, seed, matrix)?;
            let a = ScoreMatrix::center(&raw, &params)?;
            let sampler = CouplingSampler::new(exec, &a, &params)?;
            let blocks = monte_carlo_blocks(exec, samples, seed, 0, |rng, count| {
                (0..count)
                    .map(|_| {
                        let c = sampler.sample(rng)?;
                        Ok(match format {
                            Format::Json => serde_json::to_string(&c).expect("serializable"),
                            Format::Csv => format!(
                                "{},{},{},{},{},{},{}",
                                c.config.i + 1,
                                c.config.j + 1,
                                c.u,
                                c.y_prime,
                                c.y_dagger,
                                c.y_ddagger,
                                c.y_star
                            ),
                        })
                    })
                    .collect::<ewens_stein::Result<Vec<_>>>()
            });
            let mut lines = Vec::with_capacity(samples + 1);
            if format == Format::Csv {
                lines.push("i,j,u,y_prime,y_dagger,y_ddagger,y_star".to_string());
            }
            for block in blocks {
                lines.extend(block?);
            }
            lines
        }
    };
    Ok(lines.join("\n"))
}

pub fn moments(n: usize, theta: f64, orders: Option<&str>, format: Format) -> Result<String, CliError> {
    let params = EwensParams::new(theta, n)?;
    let c1 = c1_moments(&params);
    let joint = orders
        .map(|text| -> Result<_, CliError> {
            let m: Vec<usize> = parse_grid(text, "order")?;
            let value = cycle_count_factorial_moment(&m, &params);
            Ok((m, value))
        })
        .transpose()?;
    let (k1, k2) = (kappa1(&params), kappa2(&params));
    Ok(match format {
        Format::Json => {
            let mut out = json!({
                "n": n,
                "theta": theta,
                "c1": c1,
                "kappa1": k1,
                "kappa2": k2,
            });
            if let Some((m, value)) = &joint {
                out["factorial_moment"] = json!({ "orders": m, "value": value });
            }
            serde_json::to_string_pretty(&out).expect("serializable")
        }
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            for (name, v) in [
                ("mean", c1.mean),
                ("second_factorial", c1.second_factorial),
                ("second", c1.second),
                ("fourth_mixed", c1.fourth_mixed),
                ("kappa1", k1),
                ("kappa2", k2),
            ] {
                writeln!(s, "{name},{v}").unwrap();
            }
            if let Some((_, value)) = joint {
                writeln!(s, "factorial_moment,{value}").unwrap();
            }
            s
        }
    })
}

fn options(settings: &BoundSettings) -> BoundOptions {
    let eyr = match settings.eyr {
        EyrChoice::Auto => EyrMethod::Auto {
            samples: settings.eyr_samples,
            seed: settings.seed,
        },
        EyrChoice::Exact => EyrMethod::Exact,
        EyrChoice::SecondMoment => EyrMethod::SecondMoment,
        EyrChoice::MonteCarlo => EyrMethod::MonteCarlo {
            samples: settings.eyr_samples,
            seed: settings.seed,
        },
    };
    BoundOptions {
        eyr,
        empirical_samples: settings.samples,
        seed: settings.seed,
        exact: settings.exact,
        force_integer_lower_bound: settings.force_integer_lower_bound,
    }
}

fn report_for(
    n: usize,
    theta: f64,
    matrix: &MatrixArgs,
    settings: &BoundSettings,
) -> Result<BoundReport, CliError> {
    let params = EwensParams::new(theta, n)?;
    let raw = matrix_for(n, settings.seed, matrix)?;
    Ok(bound_report(&raw, &params, &options(settings))?)
}

pub fn bounds(
    n: usize,
    theta: f64,
    matrix: &MatrixArgs,
    settings: &BoundSettings,
    format: Format,
) -> Result<String, CliError> {
    let report = report_for(n, theta, matrix, settings)?;
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&report).expect("serializable"),
        Format::Csv => format!("{CSV_HEADER}\n{}", report.csv_row()),
    })
}

pub fn experiment(
    ns: &[usize],
    thetas: &[f64],
    matrix: &MatrixArgs,
    settings: &BoundSettings,
    format: Format,
) -> Result<String, CliError> {
    let mut reports = Vec::with_capacity(ns.len() * thetas.len());
    for &n in ns {
        for &theta in thetas {
            reports.push(report_for(n, theta, matrix, settings)?);
        }
    }
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(&reports).expect("serializable"),
        Format::Csv => {
            let mut s = String::from(CSV_HEADER);
            for r in &reports {
                s.push('\n');
                s.push_str(&r.csv_row());
            }
            s
        }
    })
}
