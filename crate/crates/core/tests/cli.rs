use std::path::Path;
use std::process::{Command, Output};

use marginalpriv::fingerprinting::{fpc_min_length, FingerprintingCode};
use marginalpriv::format::{read_marginals_csv, write_marginals_csv};
use marginalpriv::Database;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marginalpriv"))
        .args(args)
        .current_dir(dir)
        .env_remove("MARGINALPRIV_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&run(p, &["--help"])), 0);
    assert_eq!(code(&run(p, &["frobnicate"])), 2);
    assert_eq!(code(&run(p, &["gen", "-n", "3"])), 2);
    // unreadable input is an IO failure
    let missing = run(p, &["release", "--mechanism", "laplace", "--db", "nope.bin", "--epsilon", "1", "--out", "o.csv"]);
    assert_eq!(code(&missing), 3);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.bin"));
    assert_eq!(code(&run(p, &["gen", "-n", "4", "-d", "2", "--out", "db.bin"])), 0);
    let bad_eps = run(p, &["release", "--mechanism", "laplace", "--db", "db.bin", "--epsilon", "-1", "--out", "o.csv"]);
    assert_eq!(code(&bad_eps), 4);
    let no_eps = run(p, &["release", "--mechanism", "linf", "--db", "db.bin", "--out", "o.csv"]);
    assert_eq!(code(&no_eps), 2);
}

#[test]
fn exact_and_constant_releases_need_no_budget() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&run(p, &["gen", "-n", "8", "-d", "3", "--out", "db.bin"])), 0);
    let db = Database::load(p.join("db.bin")).unwrap();
    assert_eq!(code(&run(p, &["release", "--mechanism", "exact", "--db", "db.bin", "--out", "e.csv"])), 0);
    let exact = read_marginals_csv(std::fs::File::open(p.join("e.csv")).unwrap()).unwrap();
    assert_eq!(exact, vec![db.marginals().values().to_vec()]);
    let out = run(p, &["release", "--mechanism", "constant", "--constant", "-0.25", "--db", "db.bin", "--out", "c.csv"]);
    assert_eq!(code(&out), 0);
    let constant = read_marginals_csv(std::fs::File::open(p.join("c.csv")).unwrap()).unwrap();
    assert_eq!(constant, vec![vec![-0.25; 3]]);
}

#[test]
fn zero_trials_write_an_empty_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = run(p, &["attack", "--mechanism", "exact", "-n", "20", "--k", "2", "--delta", "0.2", "--trials", "0", "--out", "a.jsonl"]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(p.join("a.jsonl")).unwrap(), b"");
}

#[test]
fn bounds_row_at_a_tiny_delta() {
    let dir = tempfile::tempdir().unwrap();
    let delta = (-100f64).exp().to_string();
    let out = run(dir.path(), &["bounds", "-d", "100", "--alpha", "0.1", "--epsilon", "1", "--delta", &delta, "--out", "b.csv"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,alpha,epsilon,delta,laplace-approx-upper,laplace-pure-upper,fingerprinting-lower,gauss-sv-upper,packing-lower"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    // sqrt(d·ln(1/δ))/(εα) = sqrt(100·100)/0.1
    assert_eq!(row[4], "1000");
    assert_eq!(row[5], "1000");
    assert_eq!(row[6], "1000");
    assert_eq!(row[8], "100");
    let pure = run(dir.path(), &["bounds", "-d", "100", "--alpha", "0.1", "--epsilon", "1", "--out", "c.csv"]);
    assert_eq!(code(&pure), 0);
    let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("n/a"));
}

#[test]
fn biased_generation_with_p_one_is_all_plus() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "-n", "9", "-d", "70", "--dist", "biased", "--p", "1", "--out", "db.bin"]);
    assert_eq!(code(&out), 0);
    let db = Database::load(dir.path().join("db.bin")).unwrap();
    assert_eq!((db.rows(), db.dims()), (9, 70));
    assert!(db.marginals().values().iter().all(|&m| m == 1.0));
}

#[test]
fn fpc_generation_uses_the_minimum_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen", "-n", "4", "--dist", "fpc", "--delta", "0.1", "--out", "code.bin"]);
    assert_eq!(code(&out), 0);
    let code_ = FingerprintingCode::load(dir.path().join("code.bin"), dir.path().join("code.bin.fpc")).unwrap();
    assert_eq!(code_.users(), 4);
    assert_eq!(code_.length(), fpc_min_length(4, 0.1).unwrap());
    assert!(!code_.trace(code_.codebook().marginals().values()).unwrap().is_empty());
}

#[test]
fn linf_release_summary_and_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&run(p, &["gen", "-n", "500", "-d", "5", "--db-format", "text", "--out", "db.txt"])), 0);
    let out = run(p, &["release", "--mechanism", "linf", "--db", "db.txt", "--epsilon", "1", "--alpha", "0.5", "--trials", "20", "--out", "r.csv"]);
    assert_eq!(code(&out), 0);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["record"], "summary");
    assert_eq!(summary["rows"], 500);
    // ‖Y‖∞ ~ Gamma(5, 0.004) sits far below 0.5
    assert_eq!(summary["linf_within_alpha_rate"], 1.0);
    assert!(summary["linf_noise_tail"].as_f64().unwrap() < 1e-6);

    let bytes = std::fs::read(p.join("r.csv")).unwrap();
    let releases = read_marginals_csv(bytes.as_slice()).unwrap();
    assert_eq!(releases.len(), 20);
    assert!(releases.iter().all(|r| r.len() == 5 && r.iter().all(|v| v.abs() <= 1.0)));
    let mut again = Vec::new();
    write_marginals_csv(&mut again, &releases).unwrap();
    assert_eq!(again, bytes);
}

#[test]
fn seed_changes_output_and_env_seed_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run(p, &["gen", "-n", "30", "-d", "30", "--seed", "1", "--out", "a.bin"]);
    run(p, &["gen", "-n", "30", "-d", "30", "--seed", "2", "--out", "b.bin"]);
    let env = Command::new(env!("CARGO_BIN_EXE_marginalpriv"))
        .args(["gen", "-n", "30", "-d", "30", "--out", "c.bin"])
        .current_dir(p)
        .env("MARGINALPRIV_SEED", "1")
        .output()
        .unwrap();
    assert!(env.status.success());
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_ne!(read("a.bin"), read("b.bin"));
    assert_eq!(read("a.bin"), read("c.bin"));
}
