use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_file(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn swarmsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmsynth"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Paths {
    world: PathBuf,
    spec: PathBuf,
}

fn case() -> Paths {
    Paths {
        world: repo_file("worlds/paper_5x5.json"),
        spec: repo_file("specs/paper_patrol.spec"),
    }
}

fn synth_into(dir: &Path) -> PathBuf {
    let c = case();
    let o = swarmsynth(&["synth", "--world", s(&c.world), "--spec", s(&c.spec), "--out", s(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("strategy.json")
}

#[test]
fn synth_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = synth_into(dir.path());
    assert!(strategy.exists());
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("synthesis.json")).unwrap()).unwrap();
    assert_eq!(report["realizable"], true);
    assert_eq!(report["dfts_states"], 57);
    assert!(dir.path().join("dfts.json").exists());
}

#[test]
fn unreachable_goal_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(case().spec).unwrap().replace("goal & triangle", "goal & home");
    let spec = dir.path().join("bad.spec");
    fs::write(&spec, text).unwrap();
    let o = swarmsynth(&["synth", "--world", s(&case().world), "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_spec_exits_with_1_and_position() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("broken.spec");
    fs::write(&spec, "[ENV_VARS]\nbattery\n[ENV_INIT]\nbattery &\n").unwrap();
    let o = swarmsynth(&["synth", "--world", s(&case().world), "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    let o = swarmsynth(&["synth", "--world", "/nonexistent.json", "--spec", s(&case().spec)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulation_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = synth_into(dir.path());
    let c = case();
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = swarmsynth(&[
            "simulate", "--world", s(&c.world), "--spec", s(&c.spec), "--strategy", s(&strategy), "--steps", "60",
            "--seed", "4", "--falsify-prob", "0.2", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read(out.join("trajectory.csv")).unwrap());
        assert!(out.join("monitor.json").exists());
        assert_eq!(fs::read_to_string(out.join("trace.txt")).unwrap().lines().count(), 61);
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn zero_steps_give_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let c = case();
    let o = swarmsynth(&["simulate", "--world", s(&c.world), "--spec", s(&c.spec), "--steps", "0", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn strategy_for_another_world_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = synth_into(dir.path());
    let mut world: serde_json::Value = serde_json::from_str(&fs::read_to_string(case().world).unwrap()).unwrap();
    // an extra obstacle cell removes abstraction states
    world["cells"][3] = serde_json::json!("obstacle");
    let other = dir.path().join("other.json");
    fs::write(&other, world.to_string()).unwrap();
    let o = swarmsynth(&[
        "simulate", "--world", s(&other), "--spec", s(&case().spec), "--strategy", s(&strategy), "--steps", "5",
        "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let o = swarmsynth(&["verify", "--world", s(&other), "--spec", s(&case().spec), "--strategy", s(&strategy)]);
    assert_eq!(code(&o), 1);
    let o = swarmsynth(&["verify", "--world", s(&case().world), "--spec", s(&case().spec), "--strategy", s(&strategy)]);
    assert_eq!(code(&o), 0);
}

#[test]
fn refine_reports_pruning() {
    let dir = tempfile::tempdir().unwrap();
    let c = case();
    let o = swarmsynth(&["refine", "--world", s(&c.world), "--spec", s(&c.spec), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("refine.json")).unwrap()).unwrap();
    assert_eq!(rep["pruned"].as_array().unwrap().len(), 0);

    let o = swarmsynth(&[
        "refine", "--world", s(&c.world), "--spec", s(&c.spec), "--u-max", "0.1", "--out", s(dir.path()),
    ]);
    assert!([0, 2].contains(&code(&o)));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("refine.json")).unwrap()).unwrap();
    assert!(!rep["pruned"].as_array().unwrap().is_empty());

    let o = swarmsynth(&[
        "refine", "--world", s(&c.world), "--spec", s(&c.spec), "--probe-budget", "5", "--out", s(dir.path()),
    ]);
    assert_eq!(code(&o), 0);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("refine.json")).unwrap()).unwrap();
    assert!(rep["probes"].as_u64().unwrap() >= 5 * rep["probed_transitions"].as_u64().unwrap());
}

#[test]
fn bad_flags_exit_with_1() {
    let c = case();
    let o = swarmsynth(&["simulate", "--world", s(&c.world), "--spec", s(&c.spec), "--mu", "1.0"]);
    assert_eq!(code(&o), 1);
    let o = swarmsynth(&["simulate", "--world", s(&c.world), "--spec", s(&c.spec), "--dt", "0.5"]);
    assert_eq!(code(&o), 1);
}

fn count(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

#[test]
fn plot_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let world = case().world;

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let svg = dir.path().join("empty.svg");
    assert_eq!(code(&swarmsynth(&["plot", "--trajectory", s(&empty), "--world", s(&world), "--out", s(&svg)])), 0);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(count(&text, "<polyline"), 0);
    assert_eq!(count(&text, r#"class="cell""#), 25);
    assert_eq!(count(&text, "<ellipse"), 2);

    let two = dir.path().join("two.csv");
    fs::write(
        &two,
        "t,x1,y1,x2,y2,u1x,u1y,u2x,u2y,target_cell,formation_id,delta1,delta2,qp_status\n\
         0,0.2,0.5,0.8,0.5,1,0,1,0,\"(1,0)\",h,-1,0,optimal\n\
         0.01,0.21,0.5,0.81,0.5,1,0,1,0,\"(1,0)\",h,-1,0,optimal\n",
    )
    .unwrap();
    let a = dir.path().join("a.svg");
    let b = dir.path().join("b.svg");
    for out in [&a, &b] {
        assert_eq!(code(&swarmsynth(&["plot", "--trajectory", s(&two), "--world", s(&world), "--out", s(out)])), 0);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(count(&text, "<polyline"), 2);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,x1,y1,target_cell,formation_id\n0,zz,1,(0,0),h\n").unwrap();
    assert_eq!(code(&swarmsynth(&["plot", "--trajectory", s(&bad), "--world", s(&world), "--out", s(&a)])), 1);
}
