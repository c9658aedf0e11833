use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn durp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_durp"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_dataset(path: &Path, n: usize, offset: usize) {
    let mut s = String::new();
    for i in 0..n {
        let c = i % 3;
        let _ = write!(s, "{}", c + 1);
        for j in 0..6 {
            let noise = (((i + offset) * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
            let x = 0.1 * noise + if j == c { 0.5 } else { 0.0 };
            let _ = write!(s, " {}:{x:.5}", j + 1);
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&dir.path().join("train.svm"), 60, 0);
    write_dataset(&dir.path().join("test.svm"), 21, 7);
    dir
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(durp(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn bad_flag_and_bad_value_are_config_errors() {
    let dir = fixture();
    assert_eq!(durp(&["train", "--bogus"], dir.path()).status.code(), Some(1));
    let out = durp(&["train", "--train-file", "train.svm", "--out", "m.bin", "--m", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = durp(&["train", "--train-file", "train.svm", "--out", "m.bin", "--method", "lda"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(durp(&["train", "--out", "m.bin"], dir.path()).status.code(), Some(1));
}

#[test]
fn missing_input_is_runtime_error() {
    let dir = fixture();
    let out = durp(&["train", "--train-file", "absent.svm", "--out", "m.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_eval_saved_metric() {
    let dir = fixture();
    let out = durp(
        &["train", "--train-file", "train.svm", "--out", "m.bin", "--m", "3", "--triplets", "300", "--trace", "t.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(dir.path().join("m.bin")).unwrap();
    let q = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    assert_eq!(q, 6);
    assert_eq!(bytes.len(), 8 + q * q * 8);
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("epoch,dual_objective,duality_gap,seconds"));
    assert_eq!(trace.lines().count(), 4);

    let out = durp(
        &["eval", "--train-file", "train.svm", "--test-file", "test.svm", "--metric", "m.bin", "--k", "3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["k"], 3);
    assert_eq!(report["n_queries"], 21);
    let map = report["map"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = fixture();
    std::fs::write(dir.path().join("run.cfg"), "# small run\nm = 2\ntriplets = 200\ntrials = 2\nmethod = srp\n").unwrap();
    let out = durp(
        &["eval", "--config", "run.cfg", "--train-file", "train.svm", "--test-file", "test.svm", "--m", "4", "--out", "r.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["m"], 4);
    assert_eq!(report["config"]["triplets"], 200);
    assert_eq!(report["method"], "srp");
    assert_eq!(report["trials"].as_array().unwrap().len(), 2);
    assert!(report["generator"].as_str().is_some());
}

#[test]
fn sample_triplets_and_spectrum_csv() {
    let dir = fixture();
    let out = durp(&["sample-triplets", "--train-file", "train.svm", "--triplets", "10", "--seed", "4"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("i,j,k"));
    let rows: Vec<Vec<usize>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert_eq!(r[0] % 3, r[1] % 3);
        assert_ne!(r[0] % 3, r[2] % 3);
    }

    let out = durp(&["spectrum", "--train-file", "train.svm"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("rank,normalized_eigenvalue"));
    let total: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}
