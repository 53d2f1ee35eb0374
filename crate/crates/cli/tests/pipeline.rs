//! End-to-end runs of the `ecflow` binary on small synthetic corpora.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ecflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecflow")).args(args).output().expect("spawn ecflow")
}

fn ok(args: &[&str]) {
    let out = ecflow(args);
    assert!(
        out.status.success(),
        "ecflow {args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(args: &[&str]) -> i32 {
    ecflow(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// All regular files under `dir`, keyed by relative path.
fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Same files and bytes, ignoring the configuration snapshot (its `out` and
/// `jobs` lines legitimately differ between runs).
fn assert_same_outputs(a: &Path, b: &Path) {
    let mut ta = tree(a);
    let mut tb = tree(b);
    ta.remove(Path::new("resolved_config.txt"));
    tb.remove(Path::new("resolved_config.txt"));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{} differs between {} and {}", name.display(), a.display(), b.display());
    }
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

fn summary_value(dir: &Path, column: &str) -> f64 {
    let (header, rows) = csv(&dir.join("summary.csv"));
    let i = header.iter().position(|h| h == column).unwrap();
    rows[0][i].parse().unwrap()
}

fn small_dataset(root: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let ds = root.join(name);
    let mut args = vec!["gen-data", "--out", p(&ds), "--tasks", "2", "--demos", "2", "--num-points", "64", "--seed", "3"];
    args.extend_from_slice(extra);
    ok(&args);
    ds
}

#[test]
fn full_pipeline_writes_one_metric_row_per_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ds = small_dataset(root, "ds", &[]);
    let model = root.join("model");
    ok(&[
        "train", "--dataset", p(&ds), "--out", p(&model), "--epochs", "30", "--hidden", "32", "--cond-dim", "16",
        "--temb-dim", "8", "--steps", "50",
    ]);
    let (header, rows) = csv(&model.join("loss.csv"));
    assert_eq!(header, ["epoch", "loss"]);
    assert_eq!(rows.len(), 30);

    let samples = root.join("samples");
    ok(&["sample", "--model", p(&model.join("model.ecf")), "--dataset", p(&ds), "--out", p(&samples), "--sample-steps", "10"]);
    assert_eq!(csv(&samples.join("samples.csv")).1.len(), 4);

    for (flows, name) in [(None, "gt"), (Some(&samples), "pred")] {
        let sol = root.join(format!("sol_{name}"));
        let mut args = vec!["solve", "--dataset", p(&ds), "--out", p(&sol), "--skip-degenerate"];
        if let Some(f) = flows {
            args.extend(["--flows", p(f)]);
        }
        ok(&args);
        let ev = root.join(format!("eval_{name}"));
        ok(&["eval", "--dataset", p(&ds), "--trajectories", p(&sol), "--out", p(&ev)]);
        let (header, rows) = csv(&ev.join("metrics.csv"));
        assert_eq!(rows.len(), 4);
        assert_eq!(header.last().unwrap(), "success");
        assert!(rows.iter().all(|r| r.len() == header.len()));
        let rate = summary_value(&ev, "success_rate");
        assert!((0.0..=1.0).contains(&rate));
        assert_eq!(summary_value(&ev, "trajectories"), 4.0);
    }
    assert!(summary_value(&root.join("eval_gt"), "median_trans_err_m") < 0.02);

    let rep = root.join("report");
    let loss = format!("toy={}", p(&model.join("loss.csv")));
    let compare = format!("gt={},pred={}", p(&root.join("eval_gt")), p(&root.join("eval_pred")));
    ok(&["report", "--out", p(&rep), "--loss", &loss, "--compare", &compare]);
    for f in ["loss.svg", "comparison.svg", "report.csv"] {
        assert!(rep.join(f).is_file(), "{f}");
    }
    assert!(!rep.join("noise_sweep.svg").exists());
}

#[test]
fn resolved_config_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ds = small_dataset(root, "ds", &["--invalid-depth-fraction", "0.05"]);
    let ds_replay = root.join("ds_replay");
    ok(&["gen-data", "--config", p(&ds.join("resolved_config.txt")), "--out", p(&ds_replay)]);
    assert_same_outputs(&ds, &ds_replay);

    let model = root.join("model");
    ok(&[
        "train", "--dataset", p(&ds), "--out", p(&model), "--epochs", "5", "--hidden", "16", "--cond-dim", "8",
        "--temb-dim", "4", "--steps", "20", "--seed", "9",
    ]);
    let model_replay = root.join("model_replay");
    ok(&["train", "--config", p(&model.join("resolved_config.txt")), "--out", p(&model_replay)]);
    assert_same_outputs(&model, &model_replay);

    let sol = root.join("sol");
    ok(&["solve", "--dataset", p(&ds), "--out", p(&sol), "--flow-noise-px", "0.5", "--seed", "4", "--skip-degenerate"]);
    let sol_replay = root.join("sol_replay");
    ok(&["solve", "--config", p(&sol.join("resolved_config.txt")), "--out", p(&sol_replay), "--jobs", "2"]);
    assert_same_outputs(&sol, &sol_replay);

    let snapshot = std::fs::read_to_string(sol_replay.join("resolved_config.txt")).unwrap();
    assert!(snapshot.contains("jobs=2"));
    assert!(snapshot.contains("flow-noise-px=0.5"));
}

#[test]
fn exit_codes_follow_the_documented_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ds = small_dataset(root, "ds", &[]);
    let out = root.join("out");

    assert_eq!(code(&["solve", "--bogus"]), 2);
    assert_eq!(code(&["solve", "--dataset", p(&ds), "--out", p(&out), "--weights", "half"]), 2);
    let help = ecflow(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("Exit codes"));

    assert_eq!(code(&["solve", "--dataset", p(&root.join("absent")), "--out", p(&out)]), 3);
    assert_eq!(code(&["sample", "--model", p(&root.join("absent.ecf")), "--dataset", p(&ds), "--out", p(&out)]), 3);

    let broken = root.join("broken");
    std::fs::create_dir(&broken).unwrap();
    std::fs::write(broken.join("manifest.json"), "{ not json").unwrap();
    assert_eq!(code(&["solve", "--dataset", p(&broken), "--out", p(&out)]), 4);
    let bad_model = root.join("bad.ecf");
    std::fs::write(&bad_model, b"NOPE").unwrap();
    assert_eq!(code(&["sample", "--model", p(&bad_model), "--dataset", p(&ds), "--out", p(&out)]), 4);

    let strict = ["solve", "--dataset", p(&ds), "--out", p(&out), "--motion-threshold", "1e9"];
    assert_eq!(code(&strict), 5);
    let mut lenient = strict.to_vec();
    lenient.push("--skip-degenerate");
    assert_eq!(code(&lenient), 0);

    assert_eq!(
        code(&[
            "train", "--dataset", p(&ds), "--out", p(&out), "--epochs", "50", "--hidden", "16", "--cond-dim", "8",
            "--temb-dim", "4", "--steps", "20", "--lr-flow", "1e4", "--lr-image", "1e4", "--max-grad-norm", "0",
        ]),
        7
    );

    let file = root.join("plain_file");
    std::fs::write(&file, "x").unwrap();
    assert_eq!(code(&["solve", "--dataset", p(&ds), "--out", p(&file.join("sub"))]), 8);
}

#[test]
fn full_weighting_beats_end_effector_only_under_occlusion() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let ds = root.join("occluded");
    ok(&[
        "gen-data", "--out", p(&ds), "--tasks", "3", "--demos", "1", "--num-points", "400", "--image-size", "16",
        "--occlude-eef", "--occlude-frames", "3-6", "--seed", "11",
    ]);
    let mut errors = Vec::new();
    for weights in ["full", "eef-only"] {
        let sol = root.join(format!("sol_{weights}"));
        ok(&["solve", "--dataset", p(&ds), "--out", p(&sol), "--weights", weights, "--skip-degenerate"]);
        let ev = root.join(format!("eval_{weights}"));
        ok(&["eval", "--dataset", p(&ds), "--trajectories", p(&sol), "--out", p(&ev)]);
        errors.push(summary_value(&ev, "mean_trans_err_m"));
    }
    assert!(errors[0] <= errors[1], "full {} vs eef-only {}", errors[0], errors[1]);

    let rep = root.join("report");
    let compare = format!("full={},eef-only={}", p(&root.join("eval_full")), p(&root.join("eval_eef-only")));
    ok(&["report", "--out", p(&rep), "--compare", &compare]);
    let (_, rows) = csv(&rep.join("report.csv"));
    assert_eq!(rows.len(), 2);
    assert!(std::fs::read_to_string(rep.join("comparison.svg")).unwrap().contains("eef-only"));
}
