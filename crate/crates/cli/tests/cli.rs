use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    run_with_threads(args, None)
}

fn run_with_threads(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ewens-stein"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("EWENS_STEIN_THREADS", t.to_string()),
        None => cmd.env_remove("EWENS_STEIN_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn pmf_prints_probabilities() {
    let o = run(&["pmf", "--n", "3", "--theta", "1", "--perm", "2,3,1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p: f64 = stdout(&o).trim().parse().unwrap();
    assert!((p - 1.0 / 6.0).abs() < 1e-15);

    let o = run(&["pmf", "--n", "2", "--theta", "2", "--perm", "1,2"]);
    let p: f64 = stdout(&o).trim().parse().unwrap();
    assert!((p - 2.0 / 3.0).abs() < 1e-15);

    let o = run(&["pmf", "--n", "5", "--theta", "2", "--cycles", "(1)(2435)", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["probability"].as_f64().unwrap() - 4.0 / (2.0 * 3.0 * 4.0 * 5.0 * 6.0)).abs() < 1e-15);
}

#[test]
fn malformed_permutations_are_usage_errors() {
    let o = run(&["pmf", "--n", "3", "--theta", "1", "--perm", "2,2,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("label 2 appears more than once"), "{}", stderr(&o));

    let o = run(&["pmf", "--n", "3", "--theta", "1", "--perm", "2,x,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("position 2"), "{}", stderr(&o));
}

#[test]
fn bounds_require_six_labels() {
    let o = run(&["bounds", "--n", "5", "--theta", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n ≥ 6 required"), "{}", stderr(&o));
}

#[test]
fn exact_report_brackets_the_distance() {
    let o = run(&[
        "bounds", "--n", "7", "--theta", "1", "--generator", "integer-range:0:5", "--exact",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let lower = r["dinf_lower"].as_f64().unwrap();
    let exact = r["dinf_exact"].as_f64().unwrap();
    let upper = r["dinf_upper"].as_f64().unwrap();
    assert!(lower <= exact && exact <= upper, "{lower} {exact} {upper}");
    assert!(r["d1_exact"].as_f64().unwrap() <= r["d1_upper"].as_f64().unwrap());
    assert!(r["M"].as_f64().unwrap() > 0.0);
}

#[test]
fn empirical_report_at_fifty() {
    let o = run(&[
        "bounds", "--n", "50", "--theta", "2", "--generator", "uniform01", "--samples", "100000",
        "--eyr", "second-moment",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let upper = r["dinf_upper"].as_f64().unwrap();
    for key in ["d1_empirical", "dinf_empirical"] {
        let v = r[key]["value"].as_f64().unwrap();
        assert!((0.0..=upper).contains(&v), "{key} = {v}");
    }
}

#[test]
fn degenerate_matrix_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.csv");
    std::fs::write(&path, "0,0,0,0,0,0\n".repeat(6)).unwrap();
    let o = run(&["bounds", "--n", "6", "--theta", "1", "--matrix", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("degenerate variance"));
}

#[test]
fn asymmetric_matrix_needs_symmetrize() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    let rows: Vec<String> = (0..6)
        .map(|i| (0..6).map(|j| ((i * j * j) % 7 + i).to_string()).collect::<Vec<_>>().join(","))
        .collect();
    std::fs::write(&path, rows.join("\n")).unwrap();
    let p = path.to_str().unwrap();
    let o = run(&["bounds", "--n", "6", "--theta", "1", "--matrix", p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not symmetric"), "{}", stderr(&o));
    let o = run(&["bounds", "--n", "6", "--theta", "1", "--matrix", p, "--symmetrize"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn verify_suites() {
    let o = run(&["verify", "--suite", "moments", "--n", "7"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = run(&["verify", "--suite", "square-bias", "--n", "6"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["checks"][0]["name"], "sampler_vs_square_bias_tv");
    assert!(v["checks"][0]["value"].as_f64().unwrap() <= 1e-8);

    let o = run(&["verify", "--suite", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["ewens", "moments", "stein-identity", "square-bias", "zero-bias-identity", "bounds"] {
        assert!(err.contains(name), "{err}");
    }
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn theta_sweep_has_increasing_alphas() {
    let o = run(&[
        "experiment", "--n", "12", "--theta-grid", "0.25,0.5,1,2,4,8", "--eyr", "second-moment",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert!(csv.starts_with(
        "n,theta,sigma,M,kappa1,kappa2,alpha1,alpha2,d1_upper,dinf_upper,dinf_lower,d1_emp,dinf_emp,samples,seed"
    ));
    for name in ["alpha1", "alpha2"] {
        let col = column(&csv, name);
        assert_eq!(col.len(), 6);
        assert!(col.windows(2).all(|w| w[0] < w[1]), "{name}: {col:?}");
    }
}

#[test]
fn n_sweep_decays_like_inverse_root() {
    let o = run(&[
        "experiment", "--n-grid", "30,60,120", "--theta", "1", "--eyr", "second-moment",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    let n = column(&csv, "n");
    let scaled: Vec<f64> = column(&csv, "dinf_upper")
        .iter()
        .zip(&n)
        .map(|(d, n)| d * n.sqrt())
        .collect();
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    assert!(hi / lo < 1.3, "{scaled:?}");
}

#[test]
fn empty_grid_is_rejected() {
    let o = run(&["experiment", "--n", "10", "--theta-grid", ""]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["experiment", "--n-grid", " , ", "--theta", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Vec<u8>> = [1usize, 4, 8]
        .iter()
        .map(|&t| {
            let bounds = dir.path().join(format!("bounds-{t}.json"));
            let o = run_with_threads(
                &[
                    "bounds", "--n", "20", "--theta", "1.5", "--samples", "20000", "--seed", "7",
                    "--eyr", "monte-carlo", "--eyr-samples", "20000", "--out",
                    bounds.to_str().unwrap(),
                ],
                Some(t),
            );
            assert!(o.status.success(), "{}", stderr(&o));
            let sample = run_with_threads(
                &["sample", "--n", "12", "--theta", "0.7", "--samples", "5000", "--seed", "3", "--coupling"],
                Some(t),
            );
            assert!(sample.status.success(), "{}", stderr(&sample));
            let mut bytes = std::fs::read(Path::new(&bounds)).unwrap();
            bytes.extend(sample.stdout);
            bytes
        })
        .collect();
    assert!(runs.iter().all(|r| *r == runs[0]));
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ewens-stein"));
    let o = cmd
        .args(["moments", "--n", "5", "--theta", "1"])
        .env("EWENS_STEIN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn moments_report_uniform_kappas() {
    let o = run(&["moments", "--n", "9", "--theta", "1", "--orders", "1,1"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["kappa1"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-14);
    assert!((v["kappa2"].as_f64().unwrap() - 7f64.sqrt()).abs() < 1e-14);
    assert!((v["c1"]["mean"].as_f64().unwrap() - 1.0).abs() < 1e-14);
    // E[c₁ c₂] at θ = 1 is 1/2.
    assert!((v["factorial_moment"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-14);
}
