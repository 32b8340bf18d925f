use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dfl")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dfl(args);
    assert!(
        out.status.success(),
        "dfl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> String {
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Small, fast config: 128 particles on the default 20 degree walk.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.json");
    std::fs::write(&path, r#"{"tracker": {"particles": 128}}"#).unwrap();
    path
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["--seed", "5", "--out", s(&a), "simulate"]);
    ok(&["--seed", "5", "--out", s(&b), "simulate"]);
    ok(&["--seed", "6", "--out", s(&c), "simulate"]);
    assert_eq!(read(a.join("trace.csv")), read(b.join("trace.csv")));
    assert_eq!(read(a.join("truth.csv")), read(b.join("truth.csv")));
    assert_ne!(read(a.join("trace.csv")), read(c.join("trace.csv")));
    let manifest: serde_json::Value = serde_json::from_str(&read(a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["command"], "simulate");
    assert!(manifest["elapsed_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = small_config(tmp.path());
    ok(&["--seed", "9", "--out", s(&a), "simulate", "--config", s(&cfg)]);
    ok(&["--out", s(&b), "simulate", "--config", s(&a.join("manifest.json"))]);
    assert_eq!(read(a.join("trace.csv")), read(b.join("trace.csv")));

    let trace = a.join("trace.csv");
    let (ta, tb) = (tmp.path().join("ta"), tmp.path().join("tb"));
    ok(&["--seed", "3", "--out", s(&ta), "track", "--trace", s(&trace), "--config", s(&cfg)]);
    ok(&["--out", s(&tb), "track", "--trace", s(&trace), "--config", s(&ta.join("manifest.json"))]);
    assert_eq!(read(ta.join("estimates.csv")), read(tb.join("estimates.csv")));
}

#[test]
fn missing_config_exits_with_config_code() {
    let tmp = TempDir::new().unwrap();
    let out = dfl(&["--out", s(tmp.path()), "simulate", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"tracker": {"particles": 0}}"#).unwrap();
    assert_eq!(dfl(&["--out", s(tmp.path()), "simulate", "--config", s(&bad)]).status.code(), Some(2));
    assert_eq!(dfl(&["simulate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn malformed_trace_exits_with_format_code() {
    let tmp = TempDir::new().unwrap();
    let trace = tmp.path().join("t.csv");
    std::fs::write(&trace, "t,link,channel,rss_dbm\n0,0,0,-50\n0.032,0,0,abc\n").unwrap();
    let out = dfl(&["--out", s(tmp.path()), "track", "--trace", s(&trace)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn track_is_deterministic_and_frequency_switch_matters() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    let cfg = small_config(tmp.path());
    ok(&["--seed", "2", "--out", s(&sim), "simulate", "--config", s(&cfg)]);
    let trace = sim.join("trace.csv");
    let run = |name: &str, freq: &str| {
        let dir = tmp.path().join(name);
        ok(&[
            "--seed", "4", "--out", s(&dir), "track", "--trace", s(&trace), "--config", s(&cfg), "--use-freq", freq,
            "--particle-stride", "10",
        ]);
        dir
    };
    let (a, b, off) = (run("a", "on"), run("b", "on"), run("off", "off"));
    for f in ["estimates.csv", "diagnostics.csv", "particles.csv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    assert_ne!(read(a.join("estimates.csv")), read(off.join("estimates.csv")));
    let particles = read(a.join("particles.csv"));
    // Snapshots every tenth tracking step, 128 particles each.
    let estimates = read(a.join("estimates.csv")).lines().filter(|l| !l.ends_with(",stop")).count() - 1;
    assert_eq!(particles.lines().count() - 1, estimates.div_ceil(10) * 128);
}

#[test]
fn trace_without_crossing_gives_empty_estimates() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("far.json");
    std::fs::write(
        &cfg,
        r#"{"scenario": {"trajectory": {"start": {"x": 20.0, "y": 20.0}, "speed": 0.5, "heading": 0.0, "duration": 5.0}}}"#,
    )
    .unwrap();
    let sim = tmp.path().join("sim");
    ok(&["--out", s(&sim), "simulate", "--config", s(&cfg)]);
    let tr = tmp.path().join("tr");
    ok(&["--out", s(&tr), "track", "--trace", s(&sim.join("trace.csv")), "--config", s(&cfg)]);
    assert_eq!(read(tr.join("estimates.csv")), "t,px,vx,py,vy,event\n");
}

/// Estimates equal to the truth wherever the person is present.
fn perfect_estimates(truth: &str) -> String {
    let mut out = String::from("t,px,vx,py,vy,event\n");
    for line in truth.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f[1] != "NaN" {
            out.push_str(&format!("{},{},{},{},{},track\n", f[0], f[1], f[3], f[2], f[4]));
        }
    }
    out
}

#[test]
fn eval_of_perfect_estimates_is_zero() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["--out", s(&sim), "simulate"]);
    let truth = sim.join("truth.csv");
    let est = tmp.path().join("est.csv");
    std::fs::write(&est, perfect_estimates(&read(truth.clone()))).unwrap();
    let ev = tmp.path().join("ev");
    let out = ok(&["--out", s(&ev), "eval", "--estimates", s(&est), "--truth", s(&truth)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("eps_x = 0.0 ± 0.0 cm"));
    let csv = read(ev.join("result.csv"));
    assert!(csv.starts_with("eps_x,sigma_x,eps_y,sigma_y,eps_pct,k,seed\n0,0,0,0,"));
    let json: serde_json::Value = serde_json::from_str(&read(ev.join("result.json"))).unwrap();
    assert_eq!(json["eps_x"], 0.0);
    assert!(json["k"].as_u64().unwrap() > 100);
}

#[test]
fn eval_rejects_misaligned_estimates() {
    let tmp = TempDir::new().unwrap();
    let sim = tmp.path().join("sim");
    ok(&["--out", s(&sim), "simulate"]);
    let est = tmp.path().join("est.csv");
    std::fs::write(&est, "t,px,vx,py,vy,event\n1000.5,0,0,0,0,track\n").unwrap();
    let out = dfl(&["--out", s(tmp.path()), "eval", "--estimates", s(&est), "--truth", s(&sim.join("truth.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn one_cell_sweep_matches_the_single_run_pipeline() {
    let tmp = TempDir::new().unwrap();
    let grid = tmp.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"{"base": {"tracker": {"particles": 128}}, "grid": {"use_frequency": [true], "runs": 1}}"#,
    )
    .unwrap();
    let sw = tmp.path().join("sw");
    ok(&["--seed", "21", "--out", s(&sw), "sweep", "--grid", s(&grid), "--jobs", "1"]);
    let runs = read(sw.join("runs.csv"));
    let header: Vec<&str> = runs.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = runs.lines().nth(1).unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(read(sw.join("summary.csv")).lines().count(), 2);

    let cfg = small_config(tmp.path());
    let sim = tmp.path().join("sim");
    ok(&["--seed", col("scenario_seed"), "--out", s(&sim), "simulate", "--config", s(&cfg)]);
    let tr = tmp.path().join("tr");
    ok(&[
        "--seed", col("tracker_seed"), "--out", s(&tr), "track", "--trace", s(&sim.join("trace.csv")), "--config",
        s(&cfg), "--particle-stride", "1",
    ]);
    let ev = tmp.path().join("ev");
    ok(&[
        "--out", s(&ev), "eval", "--estimates", s(&tr.join("estimates.csv")), "--truth", s(&sim.join("truth.csv")),
        "--particles", s(&tr.join("particles.csv")),
    ]);
    let json: serde_json::Value = serde_json::from_str(&read(ev.join("result.json"))).unwrap();
    for name in ["eps_x", "eps_y", "eps_pct"] {
        let swept: f64 = col(name).parse().unwrap();
        assert_eq!(json[name].as_f64().unwrap(), swept, "{name}");
    }
    assert_eq!(json["k"].as_u64().unwrap().to_string(), col("k"));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = TempDir::new().unwrap();
    for name in ["walk_20deg.json", "walk_0deg_midway.json"] {
        ok(&["--out", s(tmp.path()), "simulate", "--config", s(&root.join(name))]);
    }
    let m: serde_json::Value = serde_json::from_str(&read(tmp.path().join("manifest.json"))).unwrap();
    assert_eq!(m["config"]["scenario"]["links"].as_array().unwrap().len(), 3);
    for name in ["sweep_heading_noise.json", "sweep_particles.json"] {
        let text = read(root.join(name));
        let spec = dfl_core::sweep::SweepSpec::from_json(&text).unwrap();
        spec.validate().unwrap();
    }
}
