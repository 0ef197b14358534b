use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use demand::io::{read_matrix, write_matrix};
use demand::DenseMatrix;

fn demand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_demand")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("synth");
    let mut args = vec!["synth", "--out", s(&out)];
    args.extend_from_slice(extra);
    let o = demand(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn pairing_corrs(csv: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pair_index,a_row,b_row,corr,hausdorff"));
    lines.map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect()
}

fn mean_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

#[test]
fn decompose_zeros() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("z.csv");
    fs::write(&input, "0,0,0\n0,0,0\n0,0,0\n0,0,0\n").unwrap();
    let out = tmp.path().join("out");
    let o = demand(&["decompose", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&out)["layers"], 1);
    let hist = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    let mut lines = hist.lines();
    assert_eq!(lines.next(), Some("layer,iteration,loss"));
    for l in lines {
        assert_eq!(l.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    for f in ["X_1.csv", "Y_1.csv", "S_1.csv", "C_1.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn decompose_synthetic_two_level() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = synth(tmp.path(), &[]);
    let out = tmp.path().join("out");
    let o = demand(&["decompose", "--input", s(&syn.join("input.csv")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["layers"], 2);
    let ranks: Vec<u64> = m["ranks"].as_array().unwrap().iter().map(|r| r.as_u64().unwrap()).collect();
    assert!(ranks[1].abs_diff(3) <= 1, "{ranks:?}");
    assert_eq!(m["config"]["lambda"], 10.0);
    let x2 = read_matrix(out.join("X_2.csv")).unwrap();
    assert_eq!(x2.shape(), (ranks[0] as usize, ranks[1] as usize));
}

#[test]
fn decompose_reads_binary_input() {
    let tmp = tempfile::tempdir().unwrap();
    let m = DenseMatrix::from_fn(12, 9, |i, j| ((i + 1) * (j + 2) % 5) as f64).unwrap();
    let bin = tmp.path().join("m.dmnd");
    let csv = tmp.path().join("m.csv");
    write_matrix(&bin, &m).unwrap();
    write_matrix(&csv, &m).unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"max_iters_per_layer": 30}"#).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (input, out) in [(&bin, &a), (&csv, &b)] {
        let o = demand(&["decompose", "--input", s(input), "--config", s(&cfg), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn config_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("m.csv");
    fs::write(&input, "1,2\n3,4\n").unwrap();
    let cfg = tmp.path().join("c.json");
    fs::write(&cfg, r#"{"lamda": 5}"#).unwrap();
    let out = tmp.path().join("out");
    let o = demand(&["decompose", "--input", s(&input), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));

    fs::write(&cfg, r#"{"lambda": 0.5}"#).unwrap();
    let o = demand(&["decompose", "--input", s(&input), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
}

#[test]
fn input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = tmp.path().join("missing.csv");
    assert_eq!(code(&demand(&["decompose", "--input", s(&missing), "--out", s(&out)])), 2);
    let ragged = tmp.path().join("r.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_eq!(code(&demand(&["decompose", "--input", s(&ragged), "--out", s(&out)])), 2);
    let bad = tmp.path().join("b.dmnd");
    fs::write(&bad, b"DMNX").unwrap();
    assert_eq!(code(&demand(&["rank", "--input", s(&bad)])), 2);
}

#[test]
fn rank_command() {
    let tmp = tempfile::tempdir().unwrap();
    // rank 3: rows are combinations of three fixed patterns
    let m = DenseMatrix::from_fn(10, 8, |i, j| {
        let a = [(i as f64).sin(), (i as f64 * 0.7).cos(), (i * i % 7) as f64];
        let b = [(j as f64).cos(), (j % 3) as f64, (j as f64 * 1.3).sin()];
        a.iter().zip(&b).map(|(x, y)| x * y).sum()
    })
    .unwrap();
    let p = tmp.path().join("r3.csv");
    write_matrix(&p, &m).unwrap();
    let o = demand(&["rank", "--input", s(&p)]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("est,wr_pos,wd_pos,wc_pos"));
    assert_eq!(lines.next().unwrap().split(',').next(), Some("3"));

    let row = tmp.path().join("row.csv");
    fs::write(&row, "1,2,3,4,5\n").unwrap();
    let o = demand(&["rank", "--input", s(&row)]);
    assert_eq!(stdout(&o).lines().nth(1).unwrap().split(',').next(), Some("1"));

    assert_eq!(code(&demand(&["rank", "--input", s(&tmp.path().join("nope.csv"))])), 2);
}

#[test]
fn synth_is_reproducible_and_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        assert_eq!(code(&demand(&["synth", "--seed", "3", "--out", s(d)])), 0);
    }
    let names = ["input.csv", "X_1.csv", "X_2.csv", "Y_1.csv", "Y_2.csv", "C_1.csv", "S_true.csv", "spec.json"];
    for n in names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    assert_eq!(read_matrix(a.join("input.csv")).unwrap().shape(), (100, 400));
    assert_eq!(read_matrix(a.join("X_1.csv")).unwrap().shape(), (100, 8));
    assert_eq!(read_matrix(a.join("Y_2.csv")).unwrap().shape(), (3, 400));

    let spec = tmp.path().join("spec.json");
    fs::write(&spec, r#"{"rows": 30, "cols": 50, "ranks": [4, 2], "seed": 1}"#).unwrap();
    let c = tmp.path().join("c");
    assert_eq!(code(&demand(&["synth", "--spec", s(&spec), "--cols", "60", "--out", s(&c)])), 0);
    assert_eq!(read_matrix(c.join("input.csv")).unwrap().shape(), (30, 60));
}

#[test]
fn synth_rejects_bad_ranks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert_eq!(code(&demand(&["synth", "--ranks", "3,5", "--out", s(&out)])), 3);
    let spec = tmp.path().join("spec.json");
    fs::write(&spec, r#"{"ranks": [4, 4]}"#).unwrap();
    assert_eq!(code(&demand(&["synth", "--spec", s(&spec), "--out", s(&out)])), 3);
    fs::write(&spec, r#"{"rank": [4, 2]}"#).unwrap();
    assert_eq!(code(&demand(&["synth", "--spec", s(&spec), "--out", s(&out)])), 3);
}

#[test]
fn evaluate_command() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = synth(tmp.path(), &["--rows", "40", "--cols", "90", "--ranks", "6,3"]);

    let o = demand(&["evaluate", "--a", s(&syn), "--b", s(&syn)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let self_corr = pairing_corrs(&stdout(&o));
    assert_eq!(self_corr.len(), 6);
    assert!(self_corr.iter().all(|c| (c - 1.0).abs() < 1e-12));

    let c1 = read_matrix(syn.join("C_1.csv")).unwrap();
    let other = read_matrix(syn.join("X_1.csv")).unwrap().transpose();
    let other = DenseMatrix::from_fn(6, 90, |i, j| other.get(i, j % 40) + c1.get(i, j) * 0.1).unwrap();
    let b = tmp.path().join("b.csv");
    write_matrix(&b, &other).unwrap();
    let permuted = tmp.path().join("p.csv");
    write_matrix(&permuted, &other.select_rows(&[4, 1, 5, 0, 3, 2]).unwrap()).unwrap();
    let base = pairing_corrs(&stdout(&demand(&["evaluate", "--a", s(&syn), "--b", s(&b)])));
    let perm = pairing_corrs(&stdout(&demand(&["evaluate", "--a", s(&syn), "--b", s(&permuted)])));
    assert!((mean_abs(&base) - mean_abs(&perm)).abs() < 1e-12);

    let o = demand(&["evaluate", "--a", s(&syn), "--b", s(&syn), "--metric", "hausdorff"]);
    assert_eq!(code(&o), 0);

    let short = tmp.path().join("short.csv");
    fs::write(&short, "1,2,3\n4,5,6\n").unwrap();
    assert_eq!(code(&demand(&["evaluate", "--a", s(&syn), "--b", s(&short)])), 2);
}

#[test]
fn reproduce_command() {
    let tmp = tempfile::tempdir().unwrap();
    let syn = synth(tmp.path(), &[]);
    let input = syn.join("input.csv");
    let run = || demand(&["reproduce", "--input", s(&input), "--split-seed", "0"]);
    let first = run();
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let corrs = pairing_corrs(&stdout(&first));
    assert!(mean_abs(&corrs) >= 0.8, "{corrs:?}");
    assert_eq!(stdout(&first), stdout(&run()));

    let small = tmp.path().join("small.csv");
    fs::write(&small, "1,2\n3,4\n5,7\n").unwrap();
    assert_eq!(code(&demand(&["reproduce", "--input", s(&small)])), 2);
}
