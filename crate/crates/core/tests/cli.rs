use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_graph-anomaly"));
    c.env_remove("GRAPH_ANOMALY_OUT");
    c
}

fn demo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/demo.toml")
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo").join(name)).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_and_version_exit_zero() {
    for arg in ["--help", "--version"] {
        let o = bin().arg(arg).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{arg}");
    }
}

#[test]
fn usage_errors_exit_two() {
    let o = bin().args(["run", "/definitely/not/here.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no such file"));
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one_with_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", "seed = 1\nunknown_key = 3\n");
    let o = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error[config]:"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn demo_run_matches_golden_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = bin().arg("run").arg(demo()).arg("--out").arg(&out).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("seed: 7\n"));
        let mut files: Vec<_> = walk(&out).into_iter().map(|p| (p.strip_prefix(&out).unwrap().to_path_buf(), std::fs::read(&p).unwrap())).collect();
        files.sort();
        trees.push(files);
    }
    assert_eq!(trees[0], trees[1]);
    let a = tmp.path().join("a");
    for f in ["table.csv", "thresholds.csv", "anomaly_counts.csv", "ablation.csv"] {
        assert_eq!(std::fs::read_to_string(a.join(f)).unwrap(), golden(f), "{f}");
    }
    for svg in ["threshold_tuning", "f1_vs_degree", "anomaly_counts", "forecast_vs_actual"] {
        assert!(a.join("plots").join(format!("{svg}.svg")).is_file());
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["--seed", "11", "ablate"])
        .arg(demo())
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("seed: 11\n"));
    assert!(tmp.path().join("ablation.csv").is_file());
}

#[test]
fn quiet_prints_only_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().args(["--quiet", "ablate"]).arg(demo()).arg("--out").arg(tmp.path()).output().unwrap();
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), tmp.path().join("ablation.csv").display().to_string());
}

#[test]
fn out_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "s.toml", "seed = 2\n[data]\nn_nodes = 4\nlen = 120\n");
    let out = tmp.path().join("env-out");
    let o = bin().arg("gen-synth").arg(&spec).env("GRAPH_ANOMALY_OUT", &out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("panel.csv").is_file() && out.join("edges.csv").is_file());
    let o = bin().arg("gen-synth").arg(&spec).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_inject_score_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let spec = write(d, "s.toml", "seed = 3\n[data]\nn_nodes = 5\nlen = 300\n");
    let inj = write(d, "inj.toml", "n_affected_nodes = 2\nevents_per_node = 2\nseed = 4\n");
    assert!(bin().arg("gen-synth").arg(&spec).arg("--out").arg(d.join("g")).output().unwrap().status.success());
    let o = bin()
        .arg("inject")
        .arg(d.join("g/panel.csv"))
        .arg(&inj)
        .args(["--from", "200", "--to", "300", "--out"])
        .arg(d.join("i"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let labels = d.join("i/labels.csv");
    let o = bin().arg("score").arg(&labels).arg(&labels).args(["--tolerance", "0"]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("micro P=1.0000 R=1.0000 F1=1.0000"), "{}", stdout(&o));
}

#[test]
fn score_counts_tolerance_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let truth = write(d, "truth.csv", "timestamp,a,b\n0,0,0\n1,1,0\n2,0,0\n3,0,1\n4,0,0\n5,0,0\n");
    let pred = write(d, "pred.csv", "timestamp,a,b\n0,0,0\n1,0,0\n2,1,0\n3,0,0\n4,0,0\n5,0,1\n");
    let o = bin()
        .arg("score")
        .arg(&pred)
        .arg(&truth)
        .args(["--tolerance", "1", "--out"])
        .arg(d.join("s"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("a: tp=1 fp=0 fn=0"), "{s}");
    assert!(s.contains("b: tp=0 fp=1 fn=1"), "{s}");
    assert!(s.contains("micro P=0.5000 R=0.5000 F1=0.5000"), "{s}");
    assert!(d.join("s/scores.csv").is_file());
}

#[test]
fn train_then_detect_reuses_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let o = bin().arg("train").arg(demo()).arg("--out").arg(out).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("graph-lstm.ckpt.json").is_file());
    let o = bin()
        .arg("detect")
        .arg(demo())
        .args(["--model", "graph-lstm", "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("using checkpoint"));
    let det = out.join("detect-graph-lstm");
    assert_eq!(std::fs::read_to_string(det.join("thresholds.csv")).unwrap(), golden("thresholds.csv"));
    assert!(det.join("flags.csv").is_file() && det.join("scores.csv").is_file());
}

#[test]
fn detect_with_frozen_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let th = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo/thresholds.csv");
    let o = bin()
        .arg("detect")
        .arg(demo())
        .args(["--model", "graph-lstm", "--thresholds"])
        .arg(&th)
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("detect-graph-lstm/thresholds.csv")).unwrap(),
        golden("thresholds.csv")
    );
}

#[test]
fn plot_redraws_from_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("anomaly_counts.csv"), golden("anomaly_counts.csv")).unwrap();
    let o = bin().arg("plot").arg(d).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = std::fs::read_to_string(d.join("plots/anomaly_counts.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("s000"));
}
