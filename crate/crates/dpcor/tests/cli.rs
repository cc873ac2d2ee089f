//! End-to-end CLI behavior: schemas, exit codes, and the grid/Metropolis
//! cross-check through the file interface.

use std::path::Path;
use std::process::Output;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dpcor")
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin()).args(args).output().unwrap()
}

fn write_csv(path: &Path, p: usize, n: usize) {
    let mut text = (0..p).map(|j| format!("v{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for i in 0..n {
        let row: Vec<String> = (0..p)
            .map(|j| format!("{}", ((i * 31 + j * 17) % 97) as f64 / 9.7 + j as f64))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn privatize_schema_and_budget_split() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");

    // Two columns: a single pair at the full budget.
    write_csv(&csv, 2, 30);
    let out2 = dir.path().join("n2.json");
    let st = run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        out2.to_str().unwrap(),
        "--epsilon",
        "1.0",
        "--mechanism",
        "geometric",
        "--seed",
        "3",
    ]);
    assert!(st.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out2).unwrap()).unwrap();
    assert_eq!(v["p"], 2);
    assert_eq!(v["counts"].as_array().unwrap().len(), 1);
    assert_eq!(v["epsilon_pair"], 1.0);
    assert_eq!(v["mechanism"], "geometric");
    // Only DP-safe fields reach the artifact.
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
    let mut expected = vec![
        "n", "p", "half_n", "mechanism", "epsilon_total", "epsilon_pair", "delta", "bounds",
        "counts",
    ];
    expected.sort_unstable();
    assert_eq!(keys, expected);

    // Five columns: ten pairs at a tenth of the budget each.
    write_csv(&csv, 5, 30);
    let out5 = dir.path().join("n5.json");
    let st = run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        out5.to_str().unwrap(),
        "--epsilon",
        "1.0",
        "--mechanism",
        "btgm",
        "--seed",
        "3",
    ]);
    assert!(st.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out5).unwrap()).unwrap();
    assert_eq!(v["counts"].as_array().unwrap().len(), 10);
    assert!((v["epsilon_pair"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(v["bounds"], serde_json::json!([0, 15]));
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    write_csv(&csv, 2, 30);

    // I/O failure: missing input file.
    let st = run(&[
        "estimate-mle",
        "--input",
        dir.path().join("missing.json").to_str().unwrap(),
        "--output",
        dir.path().join("x.json").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(3));

    // Validation failure: non-numeric CSV cell.
    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "a,b\n1.0,2.0\n1.0,oops\n").unwrap();
    let st = run(&[
        "privatize",
        "--input",
        bad_csv.to_str().unwrap(),
        "--output",
        dir.path().join("y.json").to_str().unwrap(),
        "--epsilon",
        "1.0",
        "--mechanism",
        "geometric",
        "--seed",
        "1",
    ]);
    assert_eq!(st.status.code(), Some(2));

    // Validation failure: MLE on geometric counts.
    let noisy = dir.path().join("noisy.json");
    assert!(run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        noisy.to_str().unwrap(),
        "--epsilon",
        "1.0",
        "--mechanism",
        "geometric",
        "--seed",
        "2",
    ])
    .status
    .success());
    let st = run(&[
        "estimate-mle",
        "--input",
        noisy.to_str().unwrap(),
        "--output",
        dir.path().join("z.json").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));

    // Validation failure: Bayes on range-preserving counts.
    let tgm = dir.path().join("tgm.json");
    assert!(run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        tgm.to_str().unwrap(),
        "--epsilon",
        "1.0",
        "--mechanism",
        "tgm",
        "--seed",
        "2",
    ])
    .status
    .success());
    let st = run(&[
        "estimate-bayes",
        "--input",
        tgm.to_str().unwrap(),
        "--output",
        dir.path().join("w.json").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));

    // Validation failure: incompatible scenario pairing, rejected pre-run.
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        r#"
p = 2
n = 40
runs = 1
epsilon = 1.0
mechanism = "geometric"
estimator = "mle-nn"
marginals = ["normal(0,1)", "normal(0,1)"]
seed = 1
"#,
    )
    .unwrap();
    let st = run(&[
        "simulate",
        "--config",
        scenario.to_str().unwrap(),
        "--output",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn estimate_reports_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    write_csv(&csv, 3, 50);

    let btgm = dir.path().join("btgm.json");
    assert!(run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        btgm.to_str().unwrap(),
        "--epsilon",
        "2.0",
        "--mechanism",
        "btgm",
        "--seed",
        "6",
    ])
    .status
    .success());

    let est = dir.path().join("est.json");
    assert!(run(&[
        "estimate-mle",
        "--input",
        btgm.to_str().unwrap(),
        "--output",
        est.to_str().unwrap(),
    ])
    .status
    .success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&est).unwrap()).unwrap();
    assert_eq!(v["method"], "mle-nn");
    assert_eq!(v["point"].as_array().unwrap().len(), 9);
    assert!(v["diagnostics"]["was_psd"].is_boolean());
    assert_eq!(v["source"]["mechanism"], "btgm");
    // Row-major with unit diagonal.
    let pt = v["point"].as_array().unwrap();
    assert_eq!(pt[0], 1.0);
    assert_eq!(pt[4], 1.0);
    assert_eq!(pt[8], 1.0);

    let geo = dir.path().join("geo.json");
    assert!(run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        geo.to_str().unwrap(),
        "--epsilon",
        "2.0",
        "--mechanism",
        "geometric",
        "--seed",
        "6",
    ])
    .status
    .success());
    let bay = dir.path().join("bay.json");
    assert!(run(&[
        "estimate-bayes",
        "--input",
        geo.to_str().unwrap(),
        "--output",
        bay.to_str().unwrap(),
        "--seed",
        "9",
        "--samples",
        "300",
        "--burnin",
        "300",
        "--alpha",
        "0.05",
    ])
    .status
    .success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&bay).unwrap()).unwrap();
    assert_eq!(v["method"], "bayes-na");
    assert_eq!(v["intervals"].as_array().unwrap().len(), 3);
    assert_eq!(v["diagnostics"]["sampler"], "mh");
    let acc = v["diagnostics"]["acceptance"].as_f64().unwrap();
    assert!((0.05..=0.95).contains(&acc));
    for pair in v["intervals"].as_array().unwrap() {
        let lo = pair["lo"].as_f64().unwrap();
        let hi = pair["hi"].as_f64().unwrap();
        let mean = pair["mean"].as_f64().unwrap();
        assert!(lo <= mean && mean <= hi);
    }
}

#[test]
fn grid_and_forced_mh_agree_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    write_csv(&csv, 2, 120);

    let noisy = dir.path().join("noisy.json");
    assert!(run(&[
        "privatize",
        "--input",
        csv.to_str().unwrap(),
        "--output",
        noisy.to_str().unwrap(),
        "--epsilon",
        "1.0",
        "--mechanism",
        "geometric",
        "--seed",
        "4",
    ])
    .status
    .success());

    let grid = dir.path().join("grid.json");
    assert!(run(&[
        "estimate-bayes",
        "--input",
        noisy.to_str().unwrap(),
        "--output",
        grid.to_str().unwrap(),
        "--seed",
        "1",
    ])
    .status
    .success());
    let mh = dir.path().join("mh.json");
    assert!(run(&[
        "estimate-bayes",
        "--input",
        noisy.to_str().unwrap(),
        "--output",
        mh.to_str().unwrap(),
        "--seed",
        "1",
        "--samples",
        "2000",
        "--burnin",
        "500",
        "--force-mh",
    ])
    .status
    .success());

    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&grid).unwrap()).unwrap();
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mh).unwrap()).unwrap();
    assert_eq!(g["diagnostics"]["sampler"], "grid");
    assert_eq!(m["diagnostics"]["sampler"], "mh");

    let g_mean = g["intervals"][0]["mean"].as_f64().unwrap();
    let m_mean = m["intervals"][0]["mean"].as_f64().unwrap();
    // Monte Carlo error bound from the sampler's own ESS.
    let ess = m["diagnostics"]["min_ess"].as_f64().unwrap();
    let half_width =
        (m["intervals"][0]["hi"].as_f64().unwrap() - m["intervals"][0]["lo"].as_f64().unwrap()) / 2.0;
    let se = half_width / 1.96 / ess.sqrt();
    assert!(
        (g_mean - m_mean).abs() < 3.0 * se + 1e-3,
        "grid {g_mean} vs mh {m_mean}, se {se}"
    );
}

#[test]
fn simulate_outputs_report_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        r#"
p = 2
n = 60
runs = 4
epsilon = 1.0
mechanism = "btgm"
estimator = "mle-nn"
marginals = ["gamma(2,1)", "normal(0,1)"]
seed = 11
"#,
    )
    .unwrap();
    let out = dir.path().join("report.json");
    assert!(run(&[
        "simulate",
        "--config",
        scenario.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ])
    .status
    .success());

    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["runs"], 4);
    assert!(v["mae"].as_f64().unwrap() >= 0.0);
    assert!(v["coverage"].is_null());
    assert_eq!(v["scenario"]["estimator"], "mle-nn");

    let records = std::fs::read_to_string(dir.path().join("report.records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,j,jp,truth_r,est_r,lo,hi,seed"
    );
    // One pair per replicate; interval fields empty for the MLE.
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 4);
    assert!(body[0].contains(",,"));
}

#[test]
fn verify_dp_reports_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let st = run(&[
        "verify-dp",
        "--mechanism",
        "tgm",
        "--epsilon",
        "0.5",
        "--lower",
        "0",
        "--upper",
        "10",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["satisfied"], true);
    assert!(v["max_log_ratio"].as_f64().unwrap() <= 0.5 + 1e-9);

    // Unknown mechanism name is a validation error.
    let st = run(&["verify-dp", "--mechanism", "laplace", "--epsilon", "0.5"]);
    assert_eq!(st.status.code(), Some(2));
}
