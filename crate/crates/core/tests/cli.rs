// SPDX-License-Identifier: Apache-2.0
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_timebin-cz");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn protocol_check_passes_and_writes_preamble() {
    let o = run(&["protocol-check"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    let comment = lines.next().unwrap();
    assert!(comment.starts_with(&format!("# timebin-cz {} protocol-check config=", env!("CARGO_PKG_VERSION"))));
    assert!(comment.ends_with("seed=7"));
    assert_eq!(lines.next().unwrap(), "protocol,input,max_error,branch_probability,global_phase,pass");
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 5 * 36);
    assert!(rows.iter().all(|r| r[5] == "true"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--kappa-tau", "0.5"]).status.code(), Some(1));
    assert_eq!(run(&["tls", "--tau", "3 parsecs"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_exits_two() {
    // without qubit decay ε falls monotonically, so there is no interior minimum
    let o = run(&["sweep", "--kappa-tau", "10,14,20,28", "--samples", "16", "--optimize"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tls settings\nspectral_density = gaussian\nlambda = 3.2MHz\ntau_sep = 100ns\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = data_rows(&stdout(&run(&["tls", "--config", cfg])));
    let lt: f64 = from_file[0][0].parse().unwrap();
    assert!((lt - 2.0106).abs() < 1e-3);
    let o = run(&["tls", "--config", cfg, "--lambda", "1.6MHz"]);
    let lt: f64 = data_rows(&stdout(&o))[0][0].parse().unwrap();
    assert!((lt - 1.0053).abs() < 1e-3);

    std::fs::write(dir.path().join("bad.cfg"), "lambda = 1MHz\ncolour = blue\n").unwrap();
    let o = run(&["tls", "--config", dir.path().join("bad.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
}

#[test]
fn tls_anchor_row() {
    let o = run(&["tls", "--spectral-density", "gaussian", "--lambda", "1.6MHz", "--tau-sep", "100ns"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().nth(1).unwrap(), "lambda_tau_sep,q,abs_C,phi,eta,born_warning");
    let rows = data_rows(&text);
    let lt: f64 = rows[0][0].parse().unwrap();
    assert!((lt - 1.0).abs() < 0.01);
    let abs_c: f64 = rows[0][2].parse().unwrap();
    let eta: f64 = rows[0][4].parse().unwrap();
    assert!((eta - (1.0 - abs_c) / 2.0).abs() < 1e-15);
}

#[test]
fn tabulated_spectral_density_file() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("j.txt");
    let rows: String = (-1000..=1000).map(|k| format!("{:e} 1e4\n", k as f64 * 1e6)).collect();
    std::fs::write(&table, rows).unwrap();
    let o = run(&["tls", "--spectral-density", "file", "--file", table.to_str().unwrap(), "--tau", "10ns", "--tau-sep", "20ns"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let abs_c: f64 = data_rows(&stdout(&o))[0][2].parse().unwrap();
    assert!((abs_c - (-1.0f64).exp()).abs() < 1e-8);
    // the photon spectrum reaches past a narrow table
    std::fs::write(&table, "-1e6 1\n1e6 1\n").unwrap();
    let o = run(&["tls", "--spectral-density", "file", "--file", table.to_str().unwrap(), "--tau", "10ns"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = run(&["simulate", "--fidelity", "--samples", "64", "--seed", "11", "--output", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().next().unwrap().ends_with("seed=11"));
    let eps: f64 = data_rows(&text)[0][2].parse().unwrap();
    assert!(eps > 0.0 && eps < 1e-3);
}

#[test]
fn emit_check_reports_each_width() {
    let o = run(&["emit-check", "--kappa-tau", "10,20"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 2);
    let (a, b): (f64, f64) = (rows[0][1].parse().unwrap(), rows[1][1].parse().unwrap());
    assert!(a < b && b < 1.0);
}

#[test]
fn sweep_matches_golden_file() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sweep_t1_100us_seed7.csv");
    let o = run(&["sweep", "--t1", "100us", "--kappa-tau", "8,12,16,24,32,48", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), std::fs::read_to_string(golden).unwrap());
    let report = String::from_utf8_lossy(&o.stderr);
    assert!(report.contains("slope = "));
}
