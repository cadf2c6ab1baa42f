use std::path::Path;
use std::process::{Command, Output};

fn carvemesh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carvemesh")).args(args).output().unwrap()
}

fn synth(dir: &Path, keyframes: u32) -> (String, String) {
    let scene = dir.join("s.toml");
    std::fs::write(
        &scene,
        format!("kind = \"corridor\"\nkeyframes = {keyframes}\npoints_per_keyframe = 40\nnoise_sigma = 0.02\nseed = 5\n"),
    )
    .unwrap();
    let log = dir.join("s.log");
    let truth = dir.join("s.json");
    let out = carvemesh(&["synth", scene.to_str().unwrap(), "-o", log.to_str().unwrap(), "--truth", truth.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    (log.to_str().unwrap().into(), truth.to_str().unwrap().into())
}

#[test]
fn missing_log_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = carvemesh(&["reconstruct", "/nonexistent/x.log", "-o", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("carvemesh:"));
}

#[test]
fn bad_config_and_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (log, _) = synth(dir.path(), 3);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "w1 = 0.1\nw2 = 0.5\n").unwrap();
    let o = dir.path().join("o");
    let out = carvemesh(&["reconstruct", &log, "-o", o.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = carvemesh(&["reconstruct", &log, "-o", o.to_str().unwrap(), "--every", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = carvemesh(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn every_writes_one_mesh_per_n_keyframes() {
    let dir = tempfile::tempdir().unwrap();
    let (log, truth) = synth(dir.path(), 7);
    let o = dir.path().join("o");
    let out = carvemesh(&["reconstruct", &log, "-o", o.to_str().unwrap(), "--every", "3", "--format", "off"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&o).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    // ceil(7 / 3) snapshots, the final mesh and the stats.
    assert_eq!(names, ["mesh.off", "mesh_000000.off", "mesh_000003.off", "mesh_000006.off", "stats.jsonl"]);
    let stats = std::fs::read_to_string(o.join("stats.jsonl")).unwrap();
    assert_eq!(stats.lines().count(), 7);

    let out = carvemesh(&["eval", o.join("mesh.off").to_str().unwrap(), &truth]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["mae"].as_f64().unwrap() >= 0.0);
    assert!(report["hit_fraction"].as_f64().unwrap() > 0.0);
}

#[test]
fn threaded_and_single_threaded_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (log, _) = synth(dir.path(), 6);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(carvemesh(&["reconstruct", &log, "-o", a.to_str().unwrap()]).status.success());
    assert!(carvemesh(&["reconstruct", &log, "-o", b.to_str().unwrap(), "--single-thread", "--seed", "9"]).status.success());
    assert_eq!(std::fs::read(a.join("mesh.ply")).unwrap(), std::fs::read(b.join("mesh.ply")).unwrap());
}

#[test]
fn bench_reports_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let (log, _) = synth(dir.path(), 5);
    let report = dir.path().join("r.json");
    let out = carvemesh(&["bench", &log, "--no-ablations", "-o", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let names: Vec<&str> = r["runs"].as_array().unwrap().iter().map(|x| x["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["baseline", "proposed"]);
    assert_eq!(r["runs"][1]["per_keyframe_seconds"].as_array().unwrap().len(), 5);
    assert!(r["speedup"].as_f64().unwrap() > 0.0);
}

#[test]
fn synth_rejects_bad_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("bad.toml");
    std::fs::write(&scene, "kind = \"corridor\"\nkeyframes = 0\n").unwrap();
    let out = carvemesh(&["synth", scene.to_str().unwrap(), "-o", "/dev/null", "--truth", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}
