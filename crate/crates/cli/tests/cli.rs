use std::process::{Command, Output};

use serde_json::Value;
use sparsecombine::GridFunction;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sparsecombine"));
    c.env_remove("SPARSECOMBINE_BUDGET");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[derive(Debug, PartialEq)]
struct Row {
    method: String,
    d: usize,
    n: u32,
    dof_unique: u128,
    dof_total: u128,
    value: f64,
    surplus: Option<f64>,
}

fn csv_rows(text: &str) -> Vec<Row> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["method", "d", "n", "dof_unique", "dof_total", "value", "surplus", "runtime_s"]
    );
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            Row {
                method: rec[0].to_string(),
                d: rec[1].parse().unwrap(),
                n: rec[2].parse().unwrap(),
                dof_unique: rec[3].parse().unwrap(),
                dof_total: rec[4].parse().unwrap(),
                value: rec[5].parse().unwrap(),
                surplus: (!rec[6].is_empty()).then(|| rec[6].parse().unwrap()),
            }
        })
        .collect()
}

fn json_rows(text: &str) -> Vec<Row> {
    let doc: Value = serde_json::from_str(text).unwrap();
    doc["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| Row {
            method: r["method"].as_str().unwrap().to_string(),
            d: r["d"].as_u64().unwrap() as usize,
            n: r["n"].as_u64().unwrap() as u32,
            dof_unique: r["dof_unique"].as_u64().unwrap() as u128,
            dof_total: r["dof_total"].as_u64().unwrap() as u128,
            value: r["value"].as_f64().unwrap(),
            surplus: r["surplus"].as_f64(),
        })
        .collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let base = ["study", "--method", "HOSG", "--dim", "2", "--n-min", "3", "--n-max", "6"];
    let csv_out = run(&base);
    assert_eq!(csv_out.status.code(), Some(0));
    let json_out = run(&[&base[..], &["--format", "json"]].concat());
    assert_eq!(json_out.status.code(), Some(0));
    let a = csv_rows(&stdout(&csv_out));
    let b = json_rows(&stdout(&json_out));
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    assert!(a.last().unwrap().surplus.is_none());
    assert!(a[..3].iter().all(|r| r.surplus.unwrap() >= 0.0));
}

#[test]
fn reruns_and_thread_counts_give_identical_values() {
    let base = ["study", "--method", "SG", "--dim", "3", "--n-min", "2", "--n-max", "6"];
    let first = csv_rows(&stdout(&run(&base)));
    let again = csv_rows(&stdout(&run(&base)));
    let single = csv_rows(&stdout(&run(&[&base[..], &["--parallel", "1"]].concat())));
    let three = csv_rows(&stdout(&run(&[&base[..], &["--parallel", "3"]].concat())));
    for other in [&again, &single, &three] {
        assert_eq!(first.len(), other.len());
        for (x, y) in first.iter().zip(other.iter()) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }
}

#[test]
fn budget_stop_flushes_partial_records() {
    let o = run(&["study", "--method", "FG", "--dim", "2", "--n-min", "3", "--n-max", "12", "--budget", "1e5"]);
    assert_eq!(o.status.code(), Some(2));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![3, 4, 5, 6, 7, 8]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn budget_comes_from_the_environment() {
    let o = bin()
        .args(["study", "--method", "SG", "--dim", "2", "--n-min", "2", "--n-max", "9"])
        .env("SPARSECOMBINE_BUDGET", "2000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!csv_rows(&stdout(&o)).is_empty());
    // the flag wins over the environment
    let o = bin()
        .args(["study", "--method", "SG", "--dim", "2", "--n-min", "2", "--n-max", "9", "--budget", "5e7"])
        .env("SPARSECOMBINE_BUDGET", "2000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_configurations_exit_with_three() {
    for args in [
        vec!["study", "--method", "NOPE", "--dim", "2", "--n-min", "1", "--n-max", "2"],
        vec!["study", "--method", "SG", "--dim", "2", "--n-min", "5", "--n-max", "2"],
        vec!["study", "--method", "SPLIT2D", "--dim", "3", "--n-min", "2", "--n-max", "3"],
        vec!["study", "--method", "SG", "--dim", "2", "--n-min", "2", "--n-max", "3", "--level-shift", "2"],
        vec!["study", "--method", "SG", "--dim", "2", "--n-min", "2", "--n-max", "3", "--point", "0.5"],
        vec!["study", "--method", "SG", "--dim", "2", "--n-min", "2", "--n-max", "3", "--point", "0.5,1.5"],
        vec!["study", "--method", "FG", "--dim", "2", "--n-min", "0", "--n-max", "3"],
        vec!["study", "--method", "FG", "--dim", "2", "--n-min", "1", "--n-max", "3", "--budget", "0"],
        vec!["verify", "0"],
        vec!["frobnicate"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(3), "{args:?}");
    }
}

#[test]
fn single_level_study_has_empty_surplus() {
    let o = run(&["study", "--method", "FG", "--dim", "1", "--n-min", "5", "--n-max", "5"]);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].surplus, None);
}

#[test]
fn one_dimensional_full_grid_surpluses_shrink_by_four() {
    let o = run(&["study", "--method", "FG", "--dim", "1", "--n-min", "4", "--n-max", "8"]);
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 5);
    for w in rows[..4].windows(2) {
        let ratio = w[0].surplus.unwrap() / w[1].surplus.unwrap();
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }
}

#[test]
fn explicit_point_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("study.json");
    let o = run(&[
        "study", "--method", "FG", "--dim", "2", "--n-min", "2", "--n-max", "3", "--point", "0.3,0.6",
        "--format", "json", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["point"], serde_json::json!([0.3, 0.6]));
    assert_eq!(doc["metadata"]["level_shift"], 1);
    assert_eq!(doc["records"].as_array().unwrap().len(), 2);
}

#[test]
fn surplus_points_never_lower_the_surplus() {
    let base = ["study", "--method", "SG", "--dim", "2", "--n-min", "3", "--n-max", "6"];
    let plain = csv_rows(&stdout(&run(&base)));
    let probed = csv_rows(&stdout(&run(&[&base[..], &["--surplus-points", "16"]].concat())));
    for (a, b) in plain.iter().zip(&probed) {
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        if let (Some(x), Some(y)) = (a.surplus, b.surplus) {
            assert!(y >= x);
        }
    }
}

#[test]
fn verify_passes_and_detects_perturbed_weights() {
    let o = run(&["verify", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.ends_with(" true")).count(), 9);
    assert!(text.contains("seed"));

    let o = run(&["verify", "3", "--perturb-alpha1", "1.0001"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text
        .lines()
        .any(|l| l.starts_with("cancellation_system") && l.ends_with(" false")));
}

#[test]
fn plan_dumps() {
    let o = run(&["plan", "--dim", "2", "--n", "1", "--kind", "standard"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let mut coeffs: Vec<&str> = doc["terms"].as_array().unwrap().iter().map(|t| t["coeff"].as_str().unwrap()).collect();
    coeffs.sort();
    assert_eq!(coeffs, ["-1/1", "-1/1", "1/1", "1/1", "1/1"]);
    assert_eq!(doc["coefficient_sum"], "1/1");

    let o = run(&["plan", "--dim", "1", "--n", "4", "--kind", "ho"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let terms = doc["terms"].as_array().unwrap();
    assert_eq!(terms.len(), 2);
    assert_eq!(terms[0]["levels"], serde_json::json!([4]));
    assert_eq!(terms[0]["coeff"], "-1/3");
    assert_eq!(terms[1]["coeff"], "4/3");
    assert_eq!(doc["coefficient_sum"], "1/1");

    let o = run(&["plan", "--dim", "3", "--n", "3", "--kind", "ho"]);
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["coefficient_sum"], "1/1");
    let masses = doc["level_masses"].as_object().unwrap();
    assert_eq!(masses.keys().map(|k| k.parse::<u32>().unwrap()).min(), Some(3));
    assert_eq!(masses.keys().map(|k| k.parse::<u32>().unwrap()).max(), Some(8));
}

#[test]
fn solve_writes_a_readable_grid() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.bin");
    let o = run(&["solve", "--levels", "3,4", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let summary: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let g = GridFunction::read_from(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(g.level().levels(), &[3, 4]);
    assert_eq!(summary["nodes"], 153);
    let x = sparsecombine::Point::reference(2);
    assert_eq!(g.eval(&x).unwrap(), summary["value"].as_f64().unwrap());

    let o = run(&["solve", "--levels", "0,4"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["solve", "--levels", "12,12", "--budget", "1000"]);
    assert_eq!(o.status.code(), Some(2));
}
