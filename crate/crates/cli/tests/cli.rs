use std::path::Path;
use std::process::Command;

const TINY: &str = "\
# small enough to run in a second
ppo.num_envs = 2
ppo.steps_per_env = 50
ppo.minibatch_size = 50
ppo.epochs = 1
width = 8
record_wall_time = false
checkpoint_every = 1
arena.time_limit = 150
arena.timeout_min = 50
arena.timeout_max = 150
";

fn comborl(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_comborl")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn train_tiny(dir: &Path, name: &str, algo: &str) -> String {
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.join(name);
    comborl(&[
        "train", "--task", "point_tsp", "--algo", algo, "--gamma", "0.99", "--frames", "300", "--seed", "4",
        "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet",
    ]);
    out.to_str().unwrap().to_string()
}

#[test]
fn train_writes_metrics_and_checkpoints_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a", "ppo");
    let b = train_tiny(dir.path(), "b", "ppo");
    let metrics = std::fs::read_to_string(Path::new(&a).join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 3);
    assert!(metrics.starts_with("iteration,frames,"));
    assert_eq!(metrics, std::fs::read_to_string(Path::new(&b).join("metrics.csv")).unwrap());
    for f in ["checkpoint.json", "checkpoint_000001.json", "checkpoint_000003.json", "config.json"] {
        assert!(Path::new(&a).join(f).exists(), "{f}");
    }
}

#[test]
fn resume_continues_an_interrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a", "skills");
    let full = std::fs::read_to_string(Path::new(&a).join("metrics.csv")).unwrap();
    comborl(&["train", "--resume", Path::new(&a).join("checkpoint_000001.json").to_str().unwrap(), "--quiet"]);
    assert_eq!(std::fs::read_to_string(Path::new(&a).join("metrics.csv")).unwrap(), full);
}

#[test]
fn analysis_commands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_tiny(dir.path(), "run", "ppo");
    let ck = Path::new(&run).join("checkpoint.json");
    let ck = ck.to_str().unwrap();
    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_string();

    let out = comborl(&["eval", "--checkpoint", &format!("{ck},{ck}"), "--instances", "3", "--seed-base", "10",
        "--registry", &p("reg.json"), "--report", &p("report.json")]);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("6 rows"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 6);
    assert!(Path::new(&p("reg.json")).exists());

    comborl(&["variance", "--checkpoint", ck, "--instances", "2", "--rollouts", "3", "--gammas", "1,0.99",
        "--horizons", "10", "--out", &p("var.csv")]);
    assert!(std::fs::read_to_string(p("var.csv")).unwrap().lines().count() > 10);

    comborl(&["export-traj", "--checkpoint", ck, "--instance-seed", "5", "--rollouts", "3", "--out", &p("traj.csv")]);
    let first = std::fs::read(p("traj.csv")).unwrap();
    comborl(&["export-traj", "--checkpoint", ck, "--instance-seed", "5", "--rollouts", "3", "--out", &p("traj.csv")]);
    assert_eq!(first, std::fs::read(p("traj.csv")).unwrap());
    assert!(Path::new(&p("traj.json")).exists());

    comborl(&["visit-times", "--checkpoint", ck, "--instances", "3", "--out", &p("visits.csv")]);
    assert_eq!(std::fs::read_to_string(p("visits.csv")).unwrap().lines().count(), 1 + 15);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "ppo.learning_rate = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_comborl"))
        .args(["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}
