use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gebd_core::pipeline::{evaluate_predictions, fill_all_consistency, load_annotations, select_all_gt, EvalOptions};
use gebd_core::tables::write_boundaries_csv;

fn gebd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gebd"))
        .args(args)
        .output()
        .expect("gebd runs")
}

fn stdout_value(out: &Output, key: &str) -> String {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key}= line in {text:?}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(root: &Path, videos: usize) {
    let out = gebd(&["synth", "--out", s(root), "--videos", &videos.to_string(), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_is_byte_identical_and_valid() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth(a.path(), 3);
    synth(b.path(), 3);
    let fa = files(a.path());
    assert_eq!(fa.len(), 3 * 100 + 2);
    assert_eq!(fa, files(b.path()));

    let out = gebd(&["validate", s(&a.path().join("annotations.json"))]);
    assert!(out.status.success());
    assert_eq!(stdout_value(&out, "videos"), "3");
    assert_eq!(stdout_value(&out, "tracks"), "15");
}

#[test]
fn synth_unwritable_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = gebd(&["synth", "--out", s(&blocker.join("sub")), "--videos", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn eval_perfect_empty_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3);
    let ann = dir.path().join("annotations.json");
    let gt = dir.path().join("gt.csv");
    let out = gebd(&["select-gt", s(&ann), "--out", s(&gt)]);
    assert!(out.status.success());

    let out = gebd(&["eval", s(&gt), s(&ann)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_value(&out, "f1"), "1.0000");

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "video_id,timestamp\n").unwrap();
    let out = gebd(&["eval", s(&empty), s(&ann)]);
    assert!(out.status.success());
    assert_eq!(stdout_value(&out, "f1"), "0.0000");

    let stray = dir.path().join("stray.csv");
    std::fs::write(&stray, "video_id,timestamp\nnot_a_video,1.0\n").unwrap();
    assert_eq!(gebd(&["eval", s(&stray), s(&ann)]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "[{\"video_id\": ").unwrap();
    let out = gebd(&["eval", s(&gt), s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let out = gebd(&["eval", s(&gt), s(&ann), "--mode", "window:0.5"]);
    assert!(out.status.success());
    assert_eq!(stdout_value(&out, "mode"), "absolute_window");
    assert_eq!(stdout_value(&out, "f1"), "1.0000");
}

#[test]
fn eval_csv_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3);
    let ann = dir.path().join("annotations.json");
    let mut sets = load_annotations(&ann).unwrap();
    fill_all_consistency(&mut sets, 0.05, false).unwrap();
    let gt = select_all_gt(&sets, "weighted:5".parse().unwrap()).unwrap();

    // Shifted, partly missing predictions give non-trivial scores.
    let preds: BTreeMap<String, Vec<f64>> = gt
        .iter()
        .map(|(id, ts)| {
            let mut p: Vec<f64> = ts.iter().skip(1).map(|t| t + 0.3).chain([5.0]).collect();
            p.sort_by(f64::total_cmp);
            (id.clone(), p)
        })
        .collect();
    let pred_path = dir.path().join("pred.csv");
    write_boundaries_csv(&pred_path, &preds).unwrap();
    let out_dir = dir.path().join("eval");
    let out = gebd(&[
        "eval",
        s(&pred_path),
        s(&ann),
        "--gt-policy",
        "weighted:5",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let report = evaluate_predictions(&sets, &gt, &preds, &EvalOptions::default()).unwrap();
    let mut expected = Vec::new();
    report.write_global_csv(&mut expected).unwrap();
    assert_eq!(std::fs::read(out_dir.join("global.csv")).unwrap(), expected);
    expected.clear();
    report.write_per_class_csv(&mut expected).unwrap();
    assert_eq!(std::fs::read(out_dir.join("per_class.csv")).unwrap(), expected);
    expected.clear();
    report.write_per_video_csv(&mut expected).unwrap();
    assert_eq!(std::fs::read(out_dir.join("per_video.csv")).unwrap(), expected);
    assert_eq!(stdout_value(&out, "f1"), format!("{:.4}", report.primary().f1));
}

fn stages_run(out: &Output) -> Vec<String> {
    let v = stdout_value(out, "stages_run");
    v.split(',').filter(|s| !s.is_empty()).map(String::from).collect()
}

#[test]
fn pipeline_resumes_by_stage() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 3);
    let args = ["pipeline", s(dir.path()), "--image-side", "32", "--workers", "2"];

    let first = gebd(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(stages_run(&first).len(), 9);
    let f1: f64 = stdout_value(&first, "f1").parse().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("work/run_manifest.json")).unwrap()).unwrap();
    for p in manifest["outputs"].as_array().unwrap() {
        assert!(Path::new(p.as_str().unwrap()).exists(), "{p} missing");
    }
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 9);

    // Filesystem timestamps can be coarse; make sure rewritten files are strictly newer.
    std::thread::sleep(std::time::Duration::from_millis(20));
    let again = gebd(&args);
    assert!(again.status.success());
    assert!(stages_run(&again).is_empty());

    std::fs::remove_file(dir.path().join("work/scores.csv")).unwrap();
    let resumed = gebd(&args);
    assert!(resumed.status.success());
    assert_eq!(stages_run(&resumed), ["score", "detect", "eval", "report"]);
    assert_eq!(stdout_value(&resumed, "f1"), stdout_value(&first, "f1"));
}

#[test]
fn pipeline_failure_records_completed_stages() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), 2);
    std::fs::remove_file(dir.path().join("frames/synth_0001/frame_000050.ppm")).unwrap();
    let out = gebd(&["pipeline", s(dir.path()), "--image-side", "32"]);
    assert_eq!(out.status.code(), Some(1));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("work/run_manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["consistency", "select_gt"]);
    assert!(manifest["error"].as_str().unwrap().contains("flow"));
}

#[test]
fn staged_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    synth(root, 2);
    let ann = root.join("annotations.json");
    let frames = root.join("frames");
    let gt = root.join("gt.csv");
    let flow = root.join("flow");
    let samples = root.join("samples");
    let model = root.join("model.json");
    let scores = root.join("scores.csv");
    let preds = root.join("pred.csv");
    let manifest = root.join("samples/manifest.csv");
    let figs = root.join("figs");

    let steps: Vec<Vec<&str>> = vec![
        vec!["select-gt", s(&ann), "--out", s(&gt)],
        vec!["flow", "--annotations", s(&ann), "--frames", s(&frames), "--out", s(&flow)],
        vec![
            "sample", "--annotations", s(&ann), "--frames", s(&frames), "--flow-cache", s(&flow), "--gt", s(&gt),
            "--out", s(&samples), "--image-side", "32",
        ],
        vec!["train", s(&manifest), "--out", s(&model)],
        vec![
            "score", "--annotations", s(&ann), "--frames", s(&frames), "--flow-cache", s(&flow), "--model", s(&model),
            "--out", s(&scores), "--image-side", "32",
        ],
        vec!["detect", s(&scores), "--out", s(&preds)],
        vec!["eval", s(&preds), s(&ann)],
        vec!["report", s(&preds), s(&ann), "--out", s(&figs), "--all-tracks"],
    ];
    for step in steps {
        let out = gebd(&step);
        assert!(out.status.success(), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.lines().all(|l| l.contains('=')), "{step:?}: {stdout}");
    }
    assert_eq!(std::fs::read_dir(root.join("figs/timelines")).unwrap().count(), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gebd(&["eval"]).status.code(), Some(1));
    assert_eq!(gebd(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(gebd(&["--help"]).status.code(), Some(0));
}
