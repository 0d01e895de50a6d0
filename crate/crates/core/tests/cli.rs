use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dampe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dampe"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn stage_dirs(output: &Output) -> Vec<(String, PathBuf)> {
    String::from_utf8(output.stdout.clone())
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .filter(|(_, v)| v.contains('/'))
        .map(|(k, v)| (k.to_string(), PathBuf::from(v)))
        .collect()
}

const SMALL: [&str; 8] =
    ["--set", "pretrain.steps=4", "--set", "finetune.epochs=2", "--set", "model.hidden=16", "--set", "model.d_model=16"];

#[test]
fn configuration_faults_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["align", "--set", "ot.nonsense=1"],
        vec!["align", "--set", "ot.epsilon=-1"],
        vec!["align", "--set", "missing-equals"],
        vec!["gen-data", "--set", "data.source=files"],
        vec!["bench", "--set", "bench.repeats=3"],
    ] {
        let out = dampe(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "[ot]\nepsilon = 0.01\nunknown_key = 3\n").unwrap();
    assert_eq!(dampe(dir.path(), &["align", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn data_faults_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = format!("data.dir={}", dir.path().join("absent").display());
    let out = dampe(&dir.path().join("o1"), &["gen-data", "--set", "data.source=files", "--set", &missing]);
    assert_eq!(out.status.code(), Some(3));

    let gen = dampe(&dir.path().join("o2"), &["gen-data"]);
    assert!(gen.status.success());
    let src = dir.path().join("copy");
    fs::create_dir(&src).unwrap();
    for entry in fs::read_dir(&stage_dirs(&gen)[0].1).unwrap() {
        let entry = entry.unwrap();
        fs::copy(entry.path(), src.join(entry.file_name())).unwrap();
    }
    fs::write(src.join("e_seq.mat"), "2 2\n1 2\n3 nan\n").unwrap();
    let dir_arg = format!("data.dir={}", src.display());
    let out = dampe(&dir.path().join("o3"), &["gen-data", "--set", "data.source=files", "--set", &dir_arg]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stages_are_idempotent_and_reused() {
    let dir = tempfile::tempdir().unwrap();
    let first = dampe(dir.path(), &["align", "--seed", "5"]);
    assert!(first.status.success());
    let dirs = stage_dirs(&first);
    assert_eq!(dirs.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>(), ["data", "align"]);
    let features = dirs[1].1.join("features.mat");
    let before = fs::read(&features).unwrap();
    let stamp = fs::metadata(&features).unwrap().modified().unwrap();

    let second = dampe(dir.path(), &["align", "--seed", "5"]);
    assert_eq!(stage_dirs(&second), dirs);
    assert_eq!(fs::read(&features).unwrap(), before);
    assert_eq!(fs::metadata(&features).unwrap().modified().unwrap(), stamp);

    let other = dampe(dir.path(), &["align", "--seed", "5", "--set", "ot.epsilon=0.01"]);
    let other_dirs = stage_dirs(&other);
    assert_eq!(other_dirs[0], dirs[0]);
    assert_ne!(other_dirs[1], dirs[1]);

    let fresh = tempfile::tempdir().unwrap();
    let elsewhere = dampe(fresh.path(), &["align", "--seed", "5"]);
    assert_eq!(fs::read(stage_dirs(&elsewhere)[1].1.join("features.mat")).unwrap(), before);
}

#[test]
fn resolved_snapshot_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["evaluate", "--seed", "2"];
    args.extend(SMALL);
    let first = dampe(&dir.path().join("a"), &args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let snapshot = dir.path().join("a").join("config.resolved");
    let replay = dampe(&dir.path().join("b"), &["evaluate", "--config", snapshot.to_str().unwrap()]);
    assert!(replay.status.success());
    let (a, b) = (stage_dirs(&first), stage_dirs(&replay));
    assert_eq!(a.len(), 5);
    for ((sa, da), (sb, db)) in a.iter().zip(&b) {
        assert_eq!(sa, sb);
        assert_eq!(da.file_name(), db.file_name());
        assert_eq!(fs::read(da.join("config.resolved")).unwrap(), fs::read(db.join("config.resolved")).unwrap());
    }
    for file in ["metrics.csv", "predictions.tsv"] {
        assert_eq!(fs::read(a[4].1.join(file)).unwrap(), fs::read(b[4].1.join(file)).unwrap(), "{file}");
    }
    assert_eq!(
        fs::read(dir.path().join("a/metrics.csv")).unwrap(),
        fs::read(dir.path().join("b/metrics.csv")).unwrap()
    );
    let metrics = fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value,seed\nfmax,"));
}

#[test]
fn inspect_schedule_prints_a_decreasing_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dampe(dir.path(), &["inspect-schedule", "--set", "diffusion.steps=20"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("schedule.csv")).unwrap(), text);
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 20);
    assert!(rows.windows(2).all(|w| w[1][2] < w[0][2]));
    assert!(rows.iter().all(|r| r[1] > 0.0 && r[1] <= 1.0));
    assert_eq!(dampe(dir.path(), &["inspect-schedule", "--set", "diffusion.steps=0"]).status.code(), Some(2));
}

#[test]
fn numeric_faults_exit_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = dampe(dir.path(), &["align", "--set", "ot.max_iter=1"]);
    assert_eq!(out.status.code(), Some(4));
}
