use std::fs;
use std::path::Path;
use std::process::Command;

fn sprb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sprb"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TRAIN: &str = r#"
[env]
kind = "sparse_chain"
n = 5
max_episode_len = 30

[agent]
variant = "double_dqn"
gamma = 0.9
learning_rate = 0.001
batch_size = 8
memory_capacity = 500
target_sync_interval = 50
train_every = 2
warmup_steps = 20
max_episodes = 12
seed = 4
approximator = { kind = "mlp", hidden = [8] }
epsilon = { start = 1.0, end = 0.1, decay_steps = 200 }
shaping = { sp_enabled = true, p = 1.0, rb_enabled = true, lambda = 0.65 }
"#;

#[test]
fn train_writes_history_summary_and_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "train.toml", TRAIN);
    let out = dir.path().join("run");
    let status = sprb()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("episode,env_return,shaped_return,length,steps,epsilon")
    );
    assert_eq!(lines.count(), 12);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("shaping = sp_p1+rb_l0.65"));
    assert!(summary.contains("short_run = true"));
    assert!(out.join("model.bin").exists());

    let again = dir.path().join("again");
    sprb()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&again)
        .status()
        .unwrap();
    assert_eq!(
        fs::read(out.join("history.csv")).unwrap(),
        fs::read(again.join("history.csv")).unwrap()
    );

    let other = dir.path().join("other");
    sprb()
        .args(["train", "--seed-override", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&other)
        .status()
        .unwrap();
    assert_ne!(
        fs::read(out.join("history.csv")).unwrap(),
        fs::read(other.join("history.csv")).unwrap()
    );
}

#[test]
fn missing_field_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &TRAIN.replace("gamma = 0.9\n", ""));
    let out = dir.path().join("run");
    let res = sprb()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("gamma"));
    assert!(!out.join("history.csv").exists());
}

#[test]
fn failed_training_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // a huge learning rate drives the network to non-finite values
    let text = TRAIN
        .replace("learning_rate = 0.001", "learning_rate = 1e300")
        .replace("max_episodes = 12", "max_episodes = 200");
    let cfg = write(dir.path(), "nan.toml", &text);
    let out = dir.path().join("run");
    let res = sprb()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    assert!(String::from_utf8_lossy(&res.stderr).contains("non-finite"));
    assert!(!out.join("history.csv").exists());
    assert!(!out.join("summary.txt").exists());
}

const VERIFY_OK: &str = r#"
[env]
kind = "sparse_chain"
n = 6
reward_positions = [2, 5]
max_episode_len = 8

[[checks]]
gamma = 1.0
shaping = { sp_enabled = true, p = 10.0 }
"#;

#[test]
fn verify_sp_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", VERIFY_OK);
    let out = dir.path().join("v");
    let res = sprb()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success());
    let text = fs::read_to_string(out.join("verify_report.txt")).unwrap();
    assert!(text.contains("0 inversions"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(json[0]["inversion_count"], 0);
    assert!(out.join("transitions.txt").exists());
}

#[test]
fn verify_canary_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.toml",
        r#"
[env]
kind = "mixed_rewards"

[[checks]]
gamma = 1.0
square_plus = -2.5
"#,
    );
    let res = sprb()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("v"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("witness"));
}

#[test]
fn verify_discounted_trap_warns_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.toml",
        r#"
[env]
kind = "discount_trap"
win_reward = 0.5

[[checks]]
gamma = 0.9
shaping = { sp_enabled = true, p = 10.0 }
"#,
    );
    let res = sprb()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("v"))
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
}

#[test]
fn verify_cap_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.toml", &format!("cap = 10\n{VERIFY_OK}"));
    let res = sprb()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("v"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("at least 32"));
}

const SWEEP: &str = r#"
seeds = 2
variants = ["dqn"]
p_grid = [1.0]

[[envs]]
kind = "sparse_chain"
n = 4
max_episode_len = 10

[[envs]]
kind = "grid_cliff"
width = 3
height = 2
max_episode_len = 10

[agent]
gamma = 0.9
learning_rate = 0.5
batch_size = 4
memory_capacity = 100
target_sync_interval = 10
train_every = 1
warmup_steps = 0
max_episodes = 5
approximator = { kind = "tabular" }
epsilon = { start = 0.5, end = 0.5, decay_steps = 1 }
"#;

#[test]
fn sweep_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SWEEP);
    let out = dir.path().join("s");
    let status = sprb()
        .args(["sweep", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 1 + 8);
    let comparison = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(comparison.lines().next(), Some("env,dqn/original,dqn/sp_p1"));
    assert_eq!(comparison.lines().count(), 3);
    let ranks = fs::read_to_string(out.join("ranks.csv")).unwrap();
    assert_eq!(ranks.lines().count(), 3);

    let re = dir.path().join("re");
    let status = sprb()
        .args(["metrics", "--config"])
        .arg(out.join("runs.csv"))
        .arg("--out")
        .arg(&re)
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "comparison.csv",
        "ranks.csv",
        "improvement.csv",
        "improvement_summary.csv",
    ] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(re.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    // a punishment this large overflows the batch loss, so only the SP cells fail
    let cfg = write(
        dir.path(),
        "s.toml",
        &SWEEP.replace("p_grid = [1.0]", "p_grid = [1e308]"),
    );
    let out = dir.path().join("s");
    let res = sprb()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success());
    let manifest = fs::read_to_string(out.join("runs.csv")).unwrap();
    let failed: Vec<&str> = manifest.lines().filter(|l| l.contains("failed:")).collect();
    assert_eq!(failed.len(), 4, "{manifest}");
    assert!(failed.iter().all(|l| l.contains("sp_p1")));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("failed_runs = 4"));
    assert!(summary.contains("missing_cells = 2"));
    assert!(summary.contains("ranks_skipped"));
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
}

#[test]
fn empty_sweep_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &SWEEP.replace("seeds = 2", "seeds = 0"));
    let res = sprb()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("empty grid"));
}

#[test]
fn sparsity_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            r#"
episodes = 5
[env]
kind = "sparse_chain"
n = 31
reward_positions = [10, 20, 30]
max_episode_len = 100
[policy]
kind = "constant"
action = 1
"#,
            10.0,
        ),
        (
            r#"
episodes = 5
[env]
kind = "block_rewards"
blocks = 6
gap = 1
[policy]
kind = "constant"
action = 1
"#,
            1.0,
        ),
        (
            r#"
episodes = 50
seed = 3
[env]
kind = "delayed_catch"
width = 5
drop_height = 12
max_episode_len = 500
[policy]
kind = "random"
"#,
            12.0,
        ),
    ];
    for (i, (text, expect)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("sp{i}.toml"), text);
        let out = dir.path().join(format!("sp{i}"));
        let res = sprb()
            .args(["sparsity", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let summary = fs::read_to_string(out.join("sparsity_summary.txt")).unwrap();
        assert!(
            summary.contains(&format!("mean_sparsity_length = {expect}\n")),
            "case {i}: {summary}"
        );
    }
}

#[test]
fn sparsity_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "train.toml", TRAIN);
    let run = dir.path().join("run");
    assert!(sprb()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run)
        .status()
        .unwrap()
        .success());
    let text = format!(
        r#"
episodes = 3
[env]
kind = "sparse_chain"
n = 5
max_episode_len = 30
[policy]
kind = "checkpoint"
path = "{}"
epsilon = 0.1
"#,
        run.join("model.bin").display()
    );
    let scfg = write(dir.path(), "sp.toml", &text);
    let out = dir.path().join("sp");
    let res = sprb()
        .args(["sparsity", "--config"])
        .arg(&scfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(out.join("sparsity.csv")).unwrap().lines().count(), 4);
}
