//! End-to-end smoke tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cameron-cli")
}

const SMOKE_CONFIG: &str = r#"
[run]
env = "chain5"
episodes = 12
eval_episodes = 20
anchor_episodes = 50

[baseline]
steps = 50
bc_steps = 100

[combo]
iterations = 20
critic_lr = 5e-2
hidden_critic = []
target_refresh = 5

[cameron]
iterations = 2
idle_updates = 3
ac_updates = 3
disc_updates = 1
buffer_fill = 32
eval_every = 1
eval_episodes = 5
rollouts_per_fill = 8

[cameron.idle]
hidden_e = []
hidden_g = [8]
iterations = 5

[cameron.combo]
iterations = 20
critic_lr = 5e-2
hidden_critic = []
target_refresh = 5

[cameron.dynamics]
members_trained = 2
members_kept = 2
hidden = [8]
train_steps = 80
lr = 1e-2

[idle]
hidden_e = []
hidden_g = [8]

[mmd]
gammas = [0.9]
checkpoints = [0, 2]
n_samples = 40
policies = ["medium"]
"#;

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("smoke.toml");
    fs::write(&path, SMOKE_CONFIG).unwrap();
    path
}

fn run_cli(args: &[&str], out_root: &Path, config: Option<&Path>) -> Output {
    let mut cmd = Command::new(bin());
    if let Some(cfg) = config {
        cmd.arg("--config").arg(cfg);
    }
    cmd.arg("--out-root").arg(out_root);
    cmd.args(args);
    cmd.output().unwrap()
}

fn single_run_dir(root: &Path) -> PathBuf {
    let mut entries: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(entries.len(), 1, "expected one run dir in {}", root.display());
    entries.pop().unwrap()
}

#[test]
fn train_cameron_smoke_populates_run_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let root = tmp.path().join("runs");
    let out = run_cli(&["--seed", "3", "train-cameron"], &root, Some(&cfg));
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = single_run_dir(&root);
    for name in ["config.toml", "seeds.txt", "metrics.csv", "summary.csv", "policy.json"] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(summary.contains("cameron"));
}

#[test]
fn identical_config_and_seed_reproduce_metrics_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let root = tmp.path().join(sub);
        let out = run_cli(&["--seed", "11", "train-cameron"], &root, Some(&cfg));
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let run = single_run_dir(&root);
        outputs.push((
            fs::read(run.join("metrics.csv")).unwrap(),
            fs::read(run.join("summary.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "metrics.csv differs between reruns");
    assert_eq!(outputs[0].1, outputs[1].1, "summary.csv differs between reruns");
}

#[test]
fn unknown_subcommand_exits_one_listing_names() {
    let out = Command::new(bin()).arg("train-everything").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-cameron") && err.contains("gen-data"), "{err}");
}

#[test]
fn schema_violation_exits_one_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(
        &["--set", "run.bogus_field=1", "train-bc"],
        &tmp.path().join("runs"),
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bogus_field"), "{err}");
}

#[test]
fn gen_data_feeds_later_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let gen_root = tmp.path().join("gen");
    let out = run_cli(&["--seed", "5", "gen-data"], &gen_root, Some(&cfg));
    assert!(out.status.success());
    let data_dir = single_run_dir(&gen_root);
    for name in ["expert.jsonl", "medium.jsonl", "random.jsonl"] {
        assert!(data_dir.join(name).exists(), "missing {name}");
    }
    let bc_root = tmp.path().join("bc");
    let out = run_cli(
        &["--seed", "5", "train-bc", "--data-dir", data_dir.to_str().unwrap()],
        &bc_root,
        Some(&cfg),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(single_run_dir(&bc_root).join("summary.csv").exists());
}

#[test]
fn eval_mmd_writes_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let root = tmp.path().join("runs");
    let out = run_cli(&["--seed", "2", "eval-mmd"], &root, Some(&cfg));
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = single_run_dir(&root);
    let mmd = fs::read_to_string(run.join("mmd.csv")).unwrap();
    assert!(mmd.lines().count() >= 3, "{mmd}");
    assert!(run.join("ratios.csv").exists());
}

#[test]
fn report_aggregates_and_flags_missing_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mk = |name: &str, rows: &[(&str, u64, f64)]| -> PathBuf {
        let dir = tmp.path().join(name);
        fs::create_dir_all(&dir).unwrap();
        let mut text =
            String::from("algorithm,env,variant,seed,raw_return,normalized_return\n");
        for (alg, seed, norm) in rows {
            text.push_str(&format!("{alg},chain5,default,{seed},0.0,{norm}\n"));
        }
        fs::write(dir.join("summary.csv"), text).unwrap();
        dir
    };
    let a = mk("run-a", &[("bc", 1, 50.0), ("bc", 2, 60.0), ("bc", 3, 70.0)]);
    let b = mk("run-b", &[("cameron", 1, 90.0)]);
    let out_csv = tmp.path().join("report.csv");
    let out = Command::new(bin())
        .args(["report", a.to_str().unwrap(), b.to_str().unwrap(), "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(&out_csv).unwrap();
    assert_eq!(report.lines().filter(|l| l.starts_with("run,")).count(), 4);
    let agg: Vec<&str> = report.lines().filter(|l| l.starts_with("aggregate,")).collect();
    assert_eq!(agg.len(), 2);
    let bc_agg = agg.iter().find(|l| l.contains("bc")).unwrap();
    assert!(bc_agg.contains(",60,"), "median missing: {bc_agg}");

    let empty = tmp.path().join("run-empty");
    fs::create_dir_all(&empty).unwrap();
    let out = Command::new(bin())
        .args(["report", empty.to_str().unwrap(), "--out"])
        .arg(&out_csv)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run-empty"));
}

#[test]
fn train_oril_and_tgr_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    for sub in ["train-oril", "train-tgr"] {
        let root = tmp.path().join(sub);
        // The desk horizon is short, so the time split must sit inside it.
        let out = run_cli(
            &["--seed", "4", "--set", "baseline.tgr_t0=3", sub],
            &root,
            Some(&cfg),
        );
        assert!(
            out.status.success(),
            "{sub} stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let run = single_run_dir(&root);
        assert!(run.join("cost.json").exists());
        assert!(run.join("summary.csv").exists());
    }
}

#[test]
fn ablate_mixture_covers_all_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let root = tmp.path().join("runs");
    let out = run_cli(&["--seed", "6", "ablate-mixture"], &root, Some(&cfg));
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = single_run_dir(&root);
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    for variant in ["balanced", "data-only", "idle-only", "rollout-only"] {
        assert!(summary.contains(variant), "missing {variant}: {summary}");
    }
}
