use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn memsnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsnn")).args(args).output().expect("spawn memsnn")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small approach 1 run on the generated corpus.
const SMALL_A1: [&str; 10] = [
    "--override",
    "data.train_size=200",
    "--override",
    "data.validation_size=50",
    "--override",
    "data.test_size=100",
    "--override",
    "data.min_frequency=3",
    "--override",
    "snn.steps=200",
];

#[test]
fn train_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("shmoo_features.toml");
    let stdout = ok(&memsnn(&["train", "--config", s(&cfg), "--out", s(dir.path())]));
    assert!(stdout.contains("test snn+memristor:"), "{stdout}");
    for f in ["metrics.csv", "summary.json", "weights_trace.csv", "programming_trace.csv", "params.csv", "crossbar_state.csv", "config.toml"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,train_accuracy,validation_loss,validation_accuracy,best\n"));
    assert_eq!(metrics.lines().count(), 6);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["approach"], 2);
    assert!(summary["test_accuracy"]["snn+memristor"].as_f64().unwrap() >= 95.0);
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = configs().join("shmoo_features.toml");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&memsnn(&["train", "--config", s(&cfg), "--seed", "7", "--out", s(a.path())]));
    ok(&memsnn(&["train", "--config", s(&cfg), "--seed", "7", "--out", s(b.path())]));
    for f in ["metrics.csv", "weights_trace.csv", "programming_trace.csv", "crossbar_state.csv", "params.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }

    let c = tempfile::tempdir().unwrap();
    ok(&memsnn(&["train", "--config", s(&cfg), "--seed", "8", "--out", s(c.path())]));
    let x = std::fs::read(a.path().join("weights_trace.csv")).unwrap();
    let z = std::fs::read(c.path().join("weights_trace.csv")).unwrap();
    assert!(x != z);
}

#[test]
fn missing_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("approach1.toml");
    let out = memsnn(&[
        "train",
        "--config",
        s(&cfg),
        "--override",
        "data.path=\"/nonexistent/aclImdb\"",
        "--out",
        s(dir.path()),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data.path") && err.contains("does not exist"), "{err}");
}

#[test]
fn bad_config_values_are_rejected() {
    let cfg = configs().join("shmoo_features.toml");
    for bad in ["crossbar.r_tolerance=0", "snn.steps=0", "crossbar.read_noise=1.5", "no_such_key=1"] {
        let out = memsnn(&["train", "--config", s(&cfg), "--override", bad]);
        assert!(!out.status.success(), "{bad} accepted");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("shmoo_features.toml");
    let stdout = ok(&memsnn(&[
        "sweep",
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "--param",
        "read_noise",
        "--values",
        "0,0.01",
        "--param2",
        "r_tolerance",
        "--values2",
        "0.005,0.03",
    ]));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv, stdout);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("read_noise,r_tolerance,status"));
    assert_eq!(lines.count(), 4);
    assert!(dir.path().join("cell_000").join("metrics.csv").is_file());
}

#[test]
fn eval_convert_and_map_reuse_a_checkpoint() {
    let run = tempfile::tempdir().unwrap();
    let cfg = configs().join("desk_synthetic.toml");
    let mut train = vec!["train", "--config", s(&cfg), "--out", s(run.path())];
    train.extend(SMALL_A1);
    let trained = ok(&memsnn(&train));

    let eval_dir = tempfile::tempdir().unwrap();
    let mut eval = vec!["eval", "--config", s(&cfg), "--out", s(eval_dir.path()), "--checkpoint", s(run.path())];
    eval.extend(SMALL_A1);
    let evaluated = ok(&memsnn(&eval));
    // Evaluating the saved run reproduces the training run's test numbers.
    for line in evaluated.lines() {
        assert!(trained.contains(line), "{line} not in\n{trained}");
    }
    assert!(eval_dir.path().join("eval.json").is_file());

    let conv_dir = tempfile::tempdir().unwrap();
    let mut convert = vec!["convert", "--config", s(&cfg), "--out", s(conv_dir.path()), "--checkpoint", s(run.path())];
    convert.extend(SMALL_A1);
    let converted = ok(&memsnn(&convert));
    assert!(converted.starts_with("100 weights"), "{converted}");
    let snn: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(conv_dir.path().join("snn.json")).unwrap()).unwrap();
    assert_eq!(snn["steps"], 200);

    let map_dir = tempfile::tempdir().unwrap();
    let mut map = vec!["map", "--config", s(&cfg), "--out", s(map_dir.path()), "--checkpoint", s(run.path())];
    map.extend(SMALL_A1);
    let mapped = ok(&memsnn(&map));
    assert!(mapped.contains("devices converged"), "{mapped}");
    assert!(map_dir.path().join("mapping.json").is_file());
}
