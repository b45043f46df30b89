use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use occtool_core::ingest::{write_detection_log, BBox, Detection, FrameObservation};

const T0: f64 = 1_673_254_800.0; // 2023-01-09 09:00 UTC

fn occtool(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occtool"))
        .args(args)
        .current_dir(dir)
        .env_remove("OCCTOOL_LLM_URL")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Two people walking across one camera for 60 frames; the second one leaves
/// at frame 40 and is missed by the detector for a few frames before that.
fn fixtures(dir: &Path) -> PathBuf {
    let mut obs = Vec::new();
    let mut gt = String::from("video,frame,count\n");
    let mut mot = String::new();
    for f in 0..60u64 {
        let x = f as f64 * 2.0;
        let mut dets = vec![Detection { bbox: BBox::new(50.0 + x, 40.0, 40.0, 100.0), score: 0.9, embedding: None }];
        let mut n = 1;
        mot.push_str(&format!("{f},1,{},40,40,100\n", 50.0 + x));
        if f < 40 {
            n += 1;
            mot.push_str(&format!("{f},2,{},200,40,100\n", 400.0 - x));
            let score = if (20..24).contains(&f) { 0.55 } else { 0.85 };
            dets.push(Detection { bbox: BBox::new(400.0 - x, 200.0, 40.0, 100.0), score, embedding: None });
        }
        gt.push_str(&format!("cam,{f},{n}\n"));
        obs.push(FrameObservation::new("cam", f, T0 + f as f64, dets, 0.5));
    }
    fs::write(dir.join("det.jsonl"), write_detection_log(&obs).unwrap()).unwrap();
    fs::write(dir.join("gt.csv"), gt).unwrap();
    fs::write(dir.join("cam.txt"), mot).unwrap();
    let mut weather = String::from("timestamp,tout_c\n");
    for h in 0..=24 * 4 {
        weather.push_str(&format!("2023-01-{:02}T{:02}:00:00Z,{}\n", 9 + h / 24, h % 24, 2 + h % 24 / 3));
    }
    fs::write(dir.join("weather.csv"), weather).unwrap();
    dir.to_path_buf()
}

#[test]
fn help_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let help = occtool(tmp.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["track", "refine", "eval", "aggregate", "simulate", "compare", "report"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    assert_eq!(occtool(tmp.path(), &[]).status.code(), Some(1));
    assert_eq!(occtool(tmp.path(), &["track", "--bogus"]).status.code(), Some(1));
    let missing = occtool(tmp.path(), &["track", "--detections", "nope.jsonl"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("occtool:"));
}

#[test]
fn track_then_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixtures(tmp.path());
    let series = ok(&occtool(&dir, &["track", "--detections", "det.jsonl", "--tracker", "bytetrack", "--tracks-out", "tracks"]));
    assert!(series.starts_with("video,frame,ts,count,"));
    assert_eq!(series.lines().count(), 61);
    assert!(dir.join("tracks/cam.txt").is_file());
    fs::write(dir.join("pred.csv"), &series).unwrap();

    let metrics = ok(&occtool(
        &dir,
        &["eval", "--gt", "gt.csv", "--pred", "pred.csv", "--gt-ids", "cam.txt", "--pred-tracks", "cam=tracks/cam.txt"],
    ));
    let v: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    assert!(v["global"]["mae"].as_f64().unwrap() < 0.5);
    assert!(v["global"]["id_switches"].is_u64());

    let raw = ok(&occtool(&dir, &["track", "--detections", "det.jsonl", "--conf", "0.6"]));
    assert_ne!(raw, series);
}

#[test]
fn refine_with_mock_and_env_endpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixtures(tmp.path());
    ok(&occtool(&dir, &["track", "--detections", "det.jsonl", "--out", "pred.csv"]));
    let args = ["refine", "--series", "pred.csv", "--detections", "det.jsonl"];

    let none = occtool(&dir, &args);
    assert_eq!(none.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&none.stderr).contains("OCCTOOL_LLM_URL"));

    let mocked = ok(&occtool(&dir, &[&args[..], &["--mock", "fixed:2:0.99", "--audit", "audit.jsonl"]].concat()));
    assert!(mocked.contains("llm_fused"));
    assert!(!fs::read_to_string(dir.join("audit.jsonl")).unwrap().is_empty());

    let unreachable = Command::new(env!("CARGO_BIN_EXE_occtool"))
        .args(args)
        .args(["--retries", "0", "--timeout", "2", "--out", "env.csv"])
        .current_dir(&dir)
        .env("OCCTOOL_LLM_URL", "http://127.0.0.1:9/v1/chat")
        .output()
        .unwrap();
    ok(&unreachable);
    assert!(!String::from_utf8_lossy(&unreachable.stderr).contains(" 0 without a usable answer"));
    let plain = fs::read_to_string(dir.join("pred.csv")).unwrap();
    let fallback = fs::read_to_string(dir.join("env.csv")).unwrap();
    let counts = |s: &str| s.lines().map(|l| l.split(',').nth(3).unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(counts(&plain), counts(&fallback));
}

#[test]
fn aggregate_and_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixtures(tmp.path());
    ok(&occtool(&dir, &["track", "--detections", "det.jsonl", "--out", "pred.csv"]));
    ok(&occtool(&dir, &["aggregate", "--pred", "pred.csv", "--tile-days", "3", "--start", "2023-01-09", "--out", "occ.csv"]));
    assert_eq!(fs::read_to_string(dir.join("occ.csv")).unwrap().lines().count(), 1 + 3 * 288);
    assert_eq!(occtool(&dir, &["aggregate", "--pred", "pred.csv", "--reducer", "median"]).status.code(), Some(1));

    let sim = ["simulate", "--occupancy", "occ.csv", "--weather", "weather.csv"];
    ok(&occtool(&dir, &[&sim[..], &["--controller", "baseline", "--out-dir", "base"]].concat()));
    ok(&occtool(&dir, &[&sim[..], &["--controller", "mpc", "--out-dir", "mpc", "--baseline-summary", "base/summary.json"]].concat()));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("mpc/summary.json")).unwrap()).unwrap();
    assert!(summary["savings"].is_object());
    assert_eq!(fs::read_to_string(dir.join("mpc/steps.csv")).unwrap().lines().count(), 1 + 3 * 288);
}

#[test]
fn run_compare_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixtures(tmp.path());
    fs::write(dir.join("short.toml"), "sim_days = 3\nsim_start = \"2023-01-09\"\n").unwrap();
    for (id, pipeline) in [("a", "sort"), ("b", "llm_text")] {
        let out = ok(&occtool(
            &dir,
            &[
                "run", "--pipeline", pipeline, "--spec", "short.toml", "--detections", "det.jsonl", "--gt", "gt.csv", "--weather", "weather.csv",
                "--mock", "echo", "--id", id,
            ],
        ));
        assert!(out.trim_end().ends_with(id));
    }
    let table = ok(&occtool(&dir, &["compare", "--runs", "a,b"]));
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("run,pipeline,"));
    ok(&occtool(&dir, &["report", "--run", "b", "--charts", "charts"]));
    for f in ["energy.svg", "ppd.svg", "monthly.csv"] {
        assert!(dir.join("charts").join(f).is_file(), "{f}");
    }
    assert_eq!(occtool(&dir, &["report", "--run", "missing", "--charts", "c"]).status.code(), Some(1));
}
