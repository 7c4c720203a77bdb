use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 2
hidden = 8

[hbc]
roads = [101]

[hbc.train]
epochs = 2

[dagger]
iterations = 1
roads = [101]
per_road = 1

[dagger.train]
epochs = 1

[eval]
attempt_roads = [101]
attempts = 1
twi_roads = [201]
twi_runs = 1
"#;

fn pednav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pednav"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bad_config_exits_with_the_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[dagger]\nqueue_len = 0\n").unwrap();
    let out = pednav(&["collect", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dagger.queue_len"));
}

#[test]
fn collect_train_eval_dagger_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let (data, ckpt, run) = (d.join("data.json"), d.join("p.ckpt"), d.join("run"));

    let out = pednav(&["collect", "--config", s(&cfg), "--out", s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data.exists());

    let out = pednav(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&ckpt)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = pednav(&["eval", "--config", s(&cfg), "--protocol", "attempts", "--checkpoint", s(&ckpt)]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("confront") && text.contains("/1"), "{text}");

    let out = pednav(&[
        "dagger", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let record = run.join("record.json");
    assert!(record.exists());

    let out = pednav(&["eval", "--protocol", "growth", "--record", s(&record)]);
    assert!(out.status.success());

    let out = pednav(&["replay", "--record", s(&record)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains(", 0 mismatches"));
}

#[test]
fn warm_start_flags_come_in_pairs() {
    let out = pednav(&["dagger", "--checkpoint", "x.ckpt", "--out", "o"]);
    assert!(!out.status.success());
}
