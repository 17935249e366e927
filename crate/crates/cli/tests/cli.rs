use std::path::Path;
use std::process::{Command, Output};

use cohten_core::io::{format_cmx, format_cpj, format_ct3, parse_cpj};
use cohten_core::{CpModel, Tensor3, C64};
use nalgebra::DMatrix;
use tempfile::TempDir;

fn cohten(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cohten"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) {
    std::fs::write(dir.path().join(name), text).unwrap();
}

fn read(dir: &TempDir, name: &str) -> String {
    std::fs::read_to_string(dir.path().join(name)).unwrap()
}

fn real(m: usize, r: usize, vals: &[f64]) -> DMatrix<C64> {
    DMatrix::from_column_slice(m, r, &vals.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
}

const SCENARIO: &str = r#"{
  "sensors": [[0,0,0],[0.5,0,0],[1,0,0],[1.5,0,0]],
  "translations": [[0,0,0],[0.4,0,0],[0,0.4,0],[0,0,0.4]],
  "omega": 6.283185307179586,
  "celerity": 1.0,
  "sources": [
    {"direction": [0.6666666666666666, 0.3333333333333333, 0.6666666666666666], "range": "farfield", "envelope": {"kind": "gaussian"}},
    {"direction": [0.4472135954999579, -0.8944271909999159, 0.0], "range": "farfield", "envelope": {"kind": "gaussian", "amplitude": 2.0}}
  ],
  "snapshots": 8
}"#;

#[test]
fn help_and_version_exit_zero() {
    let dir = TempDir::new().unwrap();
    let o = cohten(dir.path(), &["--version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("cohten "));
    let o = cohten(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
    let help = String::from_utf8_lossy(&o.stdout).into_owned();
    for sub in ["synth", "decompose", "certify", "localize", "spark", "demo-degeneracy"] {
        assert!(help.contains(sub), "help lists {sub}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&cohten(dir.path(), &["decompose", "--bogus"])), 1);
    assert_eq!(code(&cohten(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&cohten(dir.path(), &["certify", "--model", "missing.cpj"])), 1);
    write(&dir, "bad.ct3", "CT3 1\n1 1 1\nnot numbers\n");
    assert_eq!(code(&cohten(dir.path(), &["decompose", "--in", "bad.ct3", "--rank", "1"])), 1);
    write(&dir, "one.ct3", &format_ct3(&Tensor3::from_vec((1, 1, 1), vec![C64::new(1.0, 0.0)]).unwrap()));
    let o = cohten(dir.path(), &["decompose", "--in", "one.ct3", "--rank", "1", "--mu-caps", "0.5,0.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_thread_count_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cohten"))
        .current_dir(dir.path())
        .env("COHTEN_THREADS", "zero")
        .args(["spark", "--matrix", "x.cmx"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("COHTEN_THREADS"));
}

#[test]
fn certify_orthonormal_model_exits_zero() {
    let dir = TempDir::new().unwrap();
    let eye = real(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let m = CpModel::new(vec![C64::new(1.0, 0.0); 2], eye.clone(), eye.clone(), eye).unwrap();
    write(&dir, "orthonormal_r2.cpj", &format_cpj(&m).unwrap());
    let o = cohten(dir.path(), &["certify", "--model", "orthonormal_r2.cpj"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(table.contains("coherence_kruskal"));
    assert!(table.contains("certified rank: 2"));
}

#[test]
fn certify_repeated_columns_exits_two() {
    let dir = TempDir::new().unwrap();
    let ones = real(2, 2, &[1.0, 0.0, 1.0, 0.0]);
    let m = CpModel::new(vec![C64::new(1.0, 0.0); 2], ones.clone(), ones.clone(), ones).unwrap();
    write(&dir, "bad.cpj", &format_cpj(&m).unwrap());
    let o = cohten(dir.path(), &["certify", "--model", "bad.cpj"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("fails"));
}

#[test]
fn zero_tensor_exits_three() {
    let dir = TempDir::new().unwrap();
    write(&dir, "zero.ct3", &format_ct3(&Tensor3::zeros((2, 2, 2)).unwrap()));
    let o = cohten(dir.path(), &["decompose", "--in", "zero.ct3", "--rank", "1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("degenerate input"), "{}", stderr(&o));
}

#[test]
fn unreachable_caps_exit_two() {
    // three unit vectors in C^2 cannot have coherence below 1/2
    let dir = TempDir::new().unwrap();
    let a = Tensor3::from_fn((2, 2, 2), |i, j, k| C64::new((1 + i + 2 * j + 3 * k) as f64, (i * k) as f64)).unwrap();
    write(&dir, "a.ct3", &format_ct3(&a));
    let o = cohten(
        dir.path(),
        &["decompose", "--in", "a.ct3", "--rank", "3", "--mu-caps", "0.1,0.1,0.1", "--restarts", "2", "--max-iter", "100", "--trace", "t.csv"],
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(read(&dir, "t.csv").starts_with("iter,residual,lambda_max,mu_u,mu_v,mu_w\n"));
}

#[test]
fn spark_reports_dependent_and_independent_sets() {
    let dir = TempDir::new().unwrap();
    write(&dir, "dep.cmx", &format_cmx(&real(2, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])));
    let o = cohten(dir.path(), &["spark", "--matrix", "dep.cmx", "--tol", "1e-9"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(out.contains("spark    3"), "{out}");
    assert!(out.contains("krank    2"), "{out}");

    write(&dir, "ind.cmx", &format_cmx(&real(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])));
    let out = String::from_utf8_lossy(&cohten(dir.path(), &["spark", "--matrix", "ind.cmx"]).stdout).into_owned();
    assert!(out.contains("spark    INFINITE"), "{out}");
    assert!(out.contains("krank    2"), "{out}");
}

#[test]
fn full_pipeline_recovers_sources() {
    let dir = TempDir::new().unwrap();
    write(&dir, "scn.json", SCENARIO);
    let steps: [&[&str]; 4] = [
        &["synth", "--config", "scn.json", "--seed", "11", "--out", "A.ct3", "--truth", "truth.cpj"],
        &["decompose", "--in", "A.ct3", "--rank", "2", "--seed", "5", "--out", "model.cpj", "--trace", "trace.csv"],
        &["certify", "--model", "model.cpj"],
        &["localize", "--model", "model.cpj", "--config", "scn.json", "--truth", "truth.cpj", "--out", "report.json"],
    ];
    for args in steps {
        let o = cohten(dir.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    }
    let report: serde_json::Value = serde_json::from_str(&read(&dir, "report.json")).unwrap();
    let sources = report["sources"].as_array().unwrap();
    assert_eq!(sources.len(), 2);
    for s in sources {
        assert!(s["rho"].as_f64().unwrap() >= 0.999, "{s}");
        assert!(s["direction_error_deg"].as_f64().unwrap() < 0.1, "{s}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    write(&dir, "scn.json", SCENARIO);
    let run = |tag: &str| {
        let (a, m, t) = (format!("A{tag}.ct3"), format!("m{tag}.cpj"), format!("t{tag}.csv"));
        assert_eq!(code(&cohten(dir.path(), &["synth", "--config", "scn.json", "--seed", "2", "--snr-db", "20", "--out", &a])), 0);
        let o = cohten(dir.path(), &["decompose", "--in", &a, "--rank", "2", "--seed", "9", "--out", &m, "--trace", &t]);
        assert_eq!(code(&o), 0);
        [a, m, t].map(|f| read(&dir, &f))
    };
    assert_eq!(run("1"), run("2"));
}

#[test]
fn outputs_round_trip_and_manifest_hashes_them() {
    let dir = TempDir::new().unwrap();
    write(&dir, "scn.json", SCENARIO);
    assert_eq!(code(&cohten(dir.path(), &["synth", "--config", "scn.json", "--out", "A.ct3", "--truth", "truth.cpj"])), 0);
    let text = read(&dir, "truth.cpj");
    assert_eq!(format_cpj(&parse_cpj(&text).unwrap()).unwrap(), text);

    let manifest: serde_json::Value = serde_json::from_str(&read(&dir, "A.ct3.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["exit_code"], 0);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    assert_eq!(manifest["inputs"][0]["path"], "scn.json");

    // explicit manifest path for a command without outputs
    let o = cohten(dir.path(), &["certify", "--model", "truth.cpj", "--manifest", "cert.json"]);
    assert_eq!(code(&o), 0);
    let manifest: serde_json::Value = serde_json::from_str(&read(&dir, "cert.json")).unwrap();
    assert_eq!(manifest["command"], "certify");
}

#[test]
fn demo_degeneracy_writes_table_and_trajectories() {
    let dir = TempDir::new().unwrap();
    let o = cohten(
        dir.path(),
        &["demo-degeneracy", "--n-list", "1,10,100", "--constrained-caps", "0.79,0.79,0.79", "--max-iter", "300", "--out", "demo.csv"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = read(&dir, "demo.csv");
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["n", "dist_to_limit", "lambda_max_explicit", "mu_u", "mu_v", "mu_w"]
    );
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!((rows[1][1] - 0.173494).abs() < 1e-6);
    assert!((rows[2][1] - 0.0173208).abs() < 1e-6);
    assert!(rows[2][2] > rows[1][2]);
    for name in ["demo.unconstrained.csv", "demo.constrained.csv"] {
        assert!(read(&dir, name).starts_with("iter,residual"));
    }
}
