use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use npdose::io::{load_csv, ColumnMap};
use npdose::simdata::SimModel;
use serde_json::Value;

fn npdose(args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_npdose"))
        .args(args)
        .env_remove("NPDOSE_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(bytes) = stdin {
        pipe.write_all(bytes).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["schema_version"], 1);
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn simulate(dir: &Path, model: &str, n: usize, seed: u64) -> String {
    let path = dir.join(format!("{model}_{n}_{seed}.csv"));
    let p = path.to_str().unwrap().to_string();
    let out = npdose(&["simulate", "--model", model, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", &p], None);
    assert!(out.status.success());
    p
}

#[test]
fn simulate_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulate(dir.path(), "linear", 150, 4);
    let loaded = load_csv(std::fs::File::open(&p).unwrap(), &ColumnMap::default(), false).unwrap();
    assert_eq!(loaded.data, SimModel::Linear.generate(150, 4));
}

#[test]
fn bandwidth_prints_positive_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulate(dir.path(), "single", 400, 1);
    let v = json(&npdose(&["bandwidth", "-i", &p], None));
    assert_eq!(v["command"], "bandwidth");
    let h = v["h"].as_f64().unwrap();
    let b = v["b"][0].as_f64().unwrap();
    let hbar = v["hbar"].as_f64().unwrap();
    assert!(h > 0.0 && b > 0.0 && hbar > 0.0);

    let csv = npdose(&["bandwidth", "-i", &p, "--format", "csv"], None);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("h,b1,hbar"));
}

#[test]
fn simulate_pipe_into_bootstrap_covers_base() {
    let sim = npdose(&["simulate", "--model", "single", "--n", "2000", "--seed", "1"], None);
    let v = json(&npdose(
        &["estimate", "--bootstrap", "--B", "10", "--estimator", "integral", "--seed", "3"],
        Some(&sim.stdout),
    ));
    assert_eq!(v["seed"], 3);
    assert_eq!(v["diagnostics"]["failed_replicates"], 0);
    let c = &v["curves"][0];
    assert_eq!(c["estimator"], "m_theta");
    let bands = &c["bands"];
    for (k, val) in c["values"].as_array().unwrap().iter().enumerate() {
        let val = val.as_f64().unwrap();
        for (lo, hi) in [("pointwise_lo", "pointwise_hi"), ("uniform_lo", "uniform_hi")] {
            assert!(bands[lo][k].as_f64().unwrap() <= val && val <= bands[hi][k].as_f64().unwrap());
        }
    }
}

#[test]
fn curve_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulate(dir.path(), "single", 200, 2);
    let v = json(&npdose(&["derivative", "-i", &p, "--h", "1", "--b", "1", "--hbar", "0.3"], None));
    assert_eq!(v["schema_version"], 1);
    assert_eq!((v["n"].as_u64(), v["d"].as_u64()), (Some(200), Some(1)));
    let names: Vec<&str> = v["curves"].as_array().unwrap().iter().map(|c| c["estimator"].as_str().unwrap()).collect();
    assert_eq!(names, ["theta_C", "theta_RA"]);
    assert_eq!(v["bandwidth_source"]["h"], "user");
    assert_eq!(v["params"]["q"], 2);
    assert!(v["diagnostics"]["dropped_fits"]["theta_C"].is_u64());

    let v = json(&npdose(&["estimate", "-i", &p, "--estimator", "ra", "--b", "1"], None));
    assert_eq!(v["curves"][0]["estimator"], "m_RA");
    assert_eq!(v["bandwidth_source"]["h"], "rot");
    assert_eq!(v["bandwidth_source"]["b"], "user");
    assert_eq!(v["params"]["b"][0], 1.0);

    let out = npdose(&["estimate", "-i", &p, "--format", "csv", "--estimator", "integral"], None);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("estimator,grid,value"));
    assert_eq!(lines.count(), 200);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulate(dir.path(), "single", 80, 2);
    let out = Command::new(env!("CARGO_BIN_EXE_npdose"))
        .args(["bootstrap", "-i", &p, "--B", "4", "--estimators", "theta_C"])
        .env("NPDOSE_SEED", "42")
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["seed"], 42);
    assert_eq!(v["curves"][0]["bands"]["B"], 4);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(npdose(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(npdose(&["estimate", "--q", "x"], None).status.code(), Some(2));
    assert_eq!(npdose(&["--jobs", "0", "simulate", "--model", "single", "--n", "3"], None).status.code(), Some(2));
}

#[test]
fn runtime_errors_are_json() {
    assert_eq!(error_kind(&npdose(&["estimate"], Some(b"Y,S1\n1,2\n"))), "MissingColumn");
    assert_eq!(error_kind(&npdose(&["estimate"], Some(b"Y,T,S1\n"))), "EmptyData");
    let bad = b"Y,T,S1\n1,2,3\n1,NaN,3\n";
    let out = npdose(&["estimate"], Some(bad));
    assert_eq!(error_kind(&out), "ParseError");
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert_eq!(error_kind(&npdose(&["estimate", "-i", "/nonexistent.csv"], None)), "Io");
    let out = npdose(&["estimate", "--h=-1", "--b", "1", "--hbar", "1"], Some(b"Y,T,S1\n1,2,3\n2,3,4\n"));
    assert_eq!(error_kind(&out), "InvalidInput");
}

#[test]
fn drop_bad_skips_rows() {
    let mut text = String::from("Y,T,S1\n");
    let data = SimModel::Single.generate(60, 5);
    for i in 0..60 {
        text.push_str(&format!("{},{},{}\n", data.y()[i], data.t()[i], data.s_row(i)[0]));
    }
    text.push_str("oops,1,1\n");
    let out = npdose(&["estimate", "--drop-bad", "--h", "1.5", "--b", "1.5", "--hbar", "0.3"], Some(text.as_bytes()));
    let v = json(&out);
    assert_eq!(v["n"], 60);
    assert_eq!(v["diagnostics"]["dropped_rows"], 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropped 1"));
}

#[test]
fn bounds_command() {
    let sample = b"s_1,mu,v_1,g_1\n0.5,1.5,4,2\n";
    let v = json(&npdose(&["bounds", "--rho1", "1", "--rho2", "1"], Some(sample)));
    assert_eq!((v["m_lo"].as_f64(), v["m_hi"].as_f64()), (Some(0.5), Some(2.5)));
    assert_eq!((v["theta_lo"].as_f64(), v["theta_hi"].as_f64()), (Some(1.5), Some(2.5)));

    let disjoint = b"s_1,mu,v_1,g_1\n0,0,4,2\n1,5,10,2\n";
    let v = json(&npdose(&["bounds", "--rho1", "1", "--rho2", "1"], Some(disjoint)));
    assert_eq!(v["m_empty"], true);
    assert_eq!(v["theta_empty"], true);
    assert!(v["m_lo"].is_null());

    let flat = b"s_1,mu,v_1,g_1\n0,0,4,0\n";
    assert_eq!(error_kind(&npdose(&["bounds", "--rho2", "1"], Some(flat))), "ZeroGradient");
}

#[test]
fn jobs_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulate(dir.path(), "linear", 120, 9);
    let run = |jobs: &str| npdose(&["--jobs", jobs, "bootstrap", "-i", &p, "--B", "12", "--seed", "5"], None).stdout;
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("3"));
}
