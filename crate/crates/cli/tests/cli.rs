use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = "\
image.res = 16
model.embed_dim = 8
model.hidden = 16
hyper.hidden = 8
train.scene_batch = 64
train.motion_batch = 16
train.steps = 30
infer.iters = 20
traj.K = 16
traj.iters = 20
mesh.res = 12
";

fn nfmp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfmp")).args(args).current_dir(dir).env_remove("NFMP_SEED").output().expect("spawn nfmp")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = nfmp(args, dir);
    assert!(out.status.success(), "nfmp {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    dir
}

fn count(dir: &Path, pred: impl Fn(&str) -> bool) -> usize {
    fs::read_dir(dir).unwrap().filter(|e| pred(e.as_ref().unwrap().file_name().to_str().unwrap())).count()
}

fn report_rows(path: &PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn gen_data_writes_one_directory_per_grid_point() {
    let ws = workspace();
    ok(&["gen-data", "--task", "peg", "--grid", "3", "--config", "tiny.cfg", "--out", "d"], ws.path());
    let d = ws.path().join("d");
    assert_eq!(count(&d, |n| n.starts_with("demo_")), 9);
    let cfg = fs::read_to_string(d.join("dataset.cfg")).unwrap();
    assert!(cfg.contains("image.res = 16"));
    assert!(cfg.contains("task.kind = peg"));
    for f in ["scene.pgm", "motion.csv", "meta.txt"] {
        assert!(d.join("demo_004").join(f).exists(), "{f}");
    }
}

#[test]
fn interior_test_grid_has_four_scenes() {
    let ws = workspace();
    ok(&["gen-data", "--task", "multivalued", "--grid", "4", "--interior", "--split", "test", "--config", "tiny.cfg", "--out", "t"], ws.path());
    assert_eq!(count(&ws.path().join("t"), |n| n.starts_with("demo_")), 4);
}

#[test]
fn train_eval_sweep_infer_round_trip() {
    let ws = workspace();
    let p = ws.path();
    ok(&["gen-data", "--task", "peg", "--grid", "3", "--config", "tiny.cfg", "--out", "d"], p);
    ok(&["gen-data", "--task", "peg", "--grid", "5", "--split", "test", "--config", "tiny.cfg", "--out", "t"], p);
    ok(&["train", "--data", "d", "--out", "m.ckpt"], p);
    ok(&["eval", "--ckpt", "m.ckpt", "--data", "t", "--report", "r.csv"], p);

    let report = p.join("r.csv");
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("# config: train.steps = 30"));
    let rows = report_rows(&report);
    assert_eq!(rows.len(), 26, "25 demos and a mean row");
    assert_eq!(rows[25][0], "mean");
    for (i, r) in rows[..25].iter().enumerate() {
        assert_eq!(r[0], i.to_string());
        let err: f64 = r[3].parse().unwrap();
        assert!(err.is_finite() && err >= 0.0);
    }

    ok(&["sweep", "--ckpt", "m.ckpt", "--from", "0", "--to", "2", "--steps", "11", "--out", "s"], p);
    let s = p.join("s");
    assert_eq!(count(&s, |n| n.ends_with(".pgm")), 11);
    assert_eq!(count(&s, |n| n.ends_with(".csv")), 11);
    assert!(fs::read_to_string(s.join("config.txt")).unwrap().contains("model.hidden = 16"));

    ok(&["infer", "--ckpt", "m.ckpt", "--scene", "t/demo_007", "--out", "inf"], p);
    let alpha: Vec<f64> =
        fs::read_to_string(p.join("inf/alpha.txt")).unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(alpha.len(), 9);
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p.join("inf/inferred.csv").exists());
}

#[test]
fn repeated_runs_give_identical_metrics() {
    let ws = workspace();
    let p = ws.path();
    ok(&["gen-data", "--task", "peg", "--grid", "2", "--config", "tiny.cfg", "--out", "d"], p);
    ok(&["gen-data", "--task", "peg", "--grid", "3", "--split", "test", "--config", "tiny.cfg", "--out", "t"], p);
    for run in ["a", "b"] {
        ok(&["train", "--data", "d", "--out", &format!("{run}.ckpt")], p);
        ok(&["eval", "--ckpt", &format!("{run}.ckpt"), "--data", "t", "--report", &format!("{run}.csv")], p);
    }
    assert_eq!(fs::read(p.join("a.ckpt")).unwrap(), fs::read(p.join("b.ckpt")).unwrap());
    let (a, b) = (report_rows(&p.join("a.csv")), report_rows(&p.join("b.csv")));
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        for col in [3, 4, 7] {
            let (x, y): (f64, f64) = (ra[col].parse().unwrap(), rb[col].parse().unwrap());
            assert!((x - y).abs() <= 1e-9, "column {col}: {x} vs {y}");
        }
    }
}

#[test]
fn seed_env_var_overrides_config_seed() {
    let ws = workspace();
    let p = ws.path();
    ok(&["gen-data", "--task", "peg", "--grid", "2", "--config", "tiny.cfg", "--out", "d"], p);
    ok(&["train", "--data", "d", "--out", "a.ckpt", "--steps", "2"], p);
    let out = Command::new(env!("CARGO_BIN_EXE_nfmp"))
        .args(["train", "--data", "d", "--out", "b.ckpt", "--steps", "2"])
        .current_dir(p)
        .env("NFMP_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let header = |f: &str| {
        let bytes = fs::read(p.join(f)).unwrap();
        String::from_utf8_lossy(&bytes[..bytes.len().min(4096)]).into_owned()
    };
    assert!(header("a.ckpt").contains("train.seed = 1\n"));
    assert!(header("b.ckpt").contains("train.seed = 77\n"));
}

#[test]
fn sdf_model_meshes_to_obj() {
    let ws = workspace();
    let p = ws.path();
    ok(&["gen-data", "--task", "sdfbox", "--grid", "2", "--config", "tiny.cfg", "--out", "d"], p);
    ok(&["train", "--data", "d", "--out", "m.ckpt", "--steps", "3"], p);
    ok(&["mesh", "--ckpt", "m.ckpt", "--demo", "1", "--res", "10", "--out", "m.obj"], p);
    assert!(p.join("m.obj").exists());
    let bad = nfmp(&["mesh", "--ckpt", "m.ckpt", "--out", "x.obj"], p);
    assert!(!bad.status.success());
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let ws = workspace();
    let p = ws.path();
    fs::write(p.join("bad.cfg"), "model.embed_dim = banana\n").unwrap();
    let out = nfmp(&["gen-data", "--task", "peg", "--grid", "2", "--config", "bad.cfg", "--out", "d"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.embed_dim"));

    fs::write(p.join("unknown.cfg"), "model.depth = 3\n").unwrap();
    let out = nfmp(&["gen-data", "--config", "unknown.cfg", "--out", "d"], p);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    assert!(!nfmp(&["train", "--data", "missing", "--out", "m.ckpt"], p).status.success());
    assert!(!nfmp(&["eval", "--ckpt", "m.ckpt"], p).status.success());
    assert!(!nfmp(&["frobnicate"], p).status.success());
}
