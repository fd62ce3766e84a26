//! Runs the `bosp` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use bosp_cli::report::{to_canonical_json, RunReport};
use bosp_core::linalg::{write_matrix_market, CsrMatrix};

fn bosp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bosp")).args(args).output().expect("spawn bosp")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn t0_first_eigenvalue_printed() {
    let o = bosp(&["solve", "--problem", "t0", "--n", "1000", "--nev", "10", "--nb", "10", "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("9.849886676638E-06"), "{}", stdout(&o));
}

#[test]
fn tm1_first_eigenvalue_printed() {
    let o = bosp(&["solve", "--problem", "tm1", "--n", "1000", "--nev", "10", "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("3.943890108210E-05"), "{}", stdout(&o));
}

#[test]
fn full_positive_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = bosp(&["solve", "--problem", "t0", "--n", "50", "--nev", "49", "--tol", "1e-8", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = RunReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.eigenvalues.len(), 49);
    for (l, v) in r.eigenvalues.iter().enumerate() {
        let exact = 4.0 * (std::f64::consts::PI * (l + 1) as f64 / 102.0).sin().powi(2);
        assert!((v - exact).abs() <= 1e-10 * exact, "λ{} {v} vs {exact}", l + 1);
    }
}

#[test]
fn report_and_history_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let hist = dir.path().join("h.csv");
    let o = bosp(&[
        "solve", "--problem", "tm1", "--n", "200", "--nev", "6", "--nb", "3", "--tol", "1e-9", "--out", path_str(&out),
        "--history", path_str(&hist),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let r = RunReport::from_json(&text).unwrap();
    assert_eq!(r.to_json().unwrap() + "\n", text);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(to_canonical_json(&v).unwrap() + "\n", text);
    assert!(r.converged);
    assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.residuals.iter().all(|&x| x <= 1e-9));
    assert_eq!(r.problem.nullspace_rank, 1);

    let csv = std::fs::read_to_string(&hist).unwrap();
    let rows = csv.lines().count() - 1;
    assert_eq!(rows, r.iterations * r.config.nev);
}

#[test]
fn matrix_market_input_matches_named_problem() {
    let dir = tempfile::tempdir().unwrap();
    let k = dir.path().join("k.mtx");
    let m = dir.path().join("m.mtx");
    write_matrix_market(&k, &CsrMatrix::tridiag_t(120, 0.0)).unwrap();
    write_matrix_market(&m, &CsrMatrix::tridiag_t(120, 0.0)).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let o1 = bosp(&["solve", "--k-file", path_str(&k), "--m-file", path_str(&m), "--nev", "4", "--out", path_str(&a)]);
    let o2 = bosp(&["solve", "--problem", "t0", "--n", "120", "--nev", "4", "--out", path_str(&b)]);
    assert_eq!(o1.status.code(), Some(0), "{}", String::from_utf8_lossy(&o1.stderr));
    assert_eq!(o2.status.code(), Some(0));
    let ra = RunReport::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let rb = RunReport::from_json(&std::fs::read_to_string(&b).unwrap()).unwrap();
    for (x, y) in ra.eigenvalues.iter().zip(&rb.eigenvalues) {
        assert!((x - y).abs() <= 1e-9 * y);
    }
}

#[test]
fn exit_codes() {
    // parse errors
    assert_eq!(bosp(&["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(bosp(&["solve"]).status.code(), Some(1));
    assert_eq!(bosp(&["solve", "--problem", "nope"]).status.code(), Some(1));
    assert_eq!(bosp(&["solve", "--problem", "t0", "--n", "100", "--nev", "4", "--nb", "5"]).status.code(), Some(1));
    assert_eq!(bosp(&["verify", "nope"]).status.code(), Some(1));

    // ingestion errors
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mtx");
    std::fs::write(&bad, "%%MatrixMarket matrix coordinate real general\n3 3 1\n1 1 oops\n").unwrap();
    let o = bosp(&["solve", "--k-file", path_str(&bad), "--m-file", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("missing.mtx");
    assert_eq!(bosp(&["solve", "--k-file", path_str(&missing), "--m-file", path_str(&missing)]).status.code(), Some(2));

    // not converged: report still written
    let out = dir.path().join("r.json");
    let o = bosp(&["solve", "--problem", "t0", "--n", "500", "--nev", "5", "--max-iter", "2", "--out", path_str(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let r = RunReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, 2);

    // wrong nullspace rank
    let o = bosp(&["solve", "--problem", "tm1", "--n", "100", "--nev", "3", "--rank-hint", "2"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn biorth_bench_table() {
    let o = bosp(&["biorth-bench", "--csv"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!(r[6] <= r[5], "MGS above CGS at n = {}", r[0]);
    }
    let n4 = &rows[0];
    assert!(n4[5] <= 1e-10 && n4[6] <= 1e-10);
    let n20 = &rows[4];
    assert!(n20[5] > 1.0 && n20[6] < 1e-1);
}

#[test]
fn verify_fast_suites() {
    for s in ["oracle", "small-solver", "biorth", "generalized"] {
        let o = bosp(&["verify", s]);
        assert_eq!(o.status.code(), Some(0), "{s}: {}", stdout(&o));
        assert!(stdout(&o).contains("PASS"));
    }
}
