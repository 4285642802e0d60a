mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cxr::checkpoint::{ClassicalCheckpoint, ClassicalModel, NetworkCheckpoint};
use cxr::commands::HistoryRow;
use cxr::config::{Overrides, RunConfig};
use cxr::report::EvalReport;
use cxr_core::arch::{ArchKind, Preset};
use cxr_core::train::Schedule;
use serde_json::json;

fn cxr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cxr")).args(args).current_dir(dir).env_remove("CXR_DATASET_ROOT").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "status {:?}\nstderr: {}", out.status, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// A blob dataset under `dir/data` and a run config for it at `dir/run.json`.
fn setup(dir: &Path, counts: [[usize; 2]; 3], extra: serde_json::Value) -> PathBuf {
    common::blob_tree(&dir.join("data"), counts, 16);
    let mut cfg = json!({
        "dataset_root": dir.join("data"),
        "resplit": {"test_count": 4, "seed": 1},
        "pipeline": {"read_side": 16},
        "classical": {"side": 8, "tsne": {"iterations": 300}},
        "output_dir": dir.join("out"),
    });
    merge(&mut cfg, extra);
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn report(path: &Path) -> EvalReport {
    let text = fs::read_to_string(path).unwrap();
    let mut v = cxr::report::parse_json(&text).unwrap();
    assert_eq!(v.len(), 1);
    v.remove(0)
}

const BLOBS: [[usize; 2]; 3] = [[5, 7], [2, 2], [1, 1]];

#[test]
fn ingest_writes_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    common::blob_tree(&dir.path().join("data"), [[1, 2], [1, 0], [0, 1]], 8);
    let out = cxr(&["ingest", "--dataset-root", "data", "--manifest-out", "m.csv"], dir.path());
    ok(&out);
    assert_eq!(
        fs::read_to_string(dir.path().join("m.csv")).unwrap(),
        "path,label,split\n\
         train/NORMAL/img_000.png,0,train\n\
         train/PNEUMONIA/img_000.png,1,train\n\
         train/PNEUMONIA/img_001.png,1,train\n\
         test/NORMAL/img_000.png,0,test\n\
         val/PNEUMONIA/img_000.png,1,val\n"
    );
    let env = Command::new(env!("CARGO_BIN_EXE_cxr"))
        .args(["ingest", "--out", "o"])
        .env("CXR_DATASET_ROOT", dir.path().join("data"))
        .current_dir(dir.path())
        .output()
        .unwrap();
    ok(&env);
    assert!(dir.path().join("o/manifest.csv").exists());
}

#[test]
fn ingest_of_missing_root_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cxr(&["ingest", "--dataset-root", "nowhere"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
    assert_eq!(code(&cxr(&["ingest"], dir.path())), 2);
}

#[test]
fn cluster_separates_blobs_and_emits_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BLOBS, json!({}));
    let stdout = ok(&cxr(&["cluster", "--config", cfg.to_str().unwrap()], dir.path()));
    assert!(stdout.starts_with("Model & Acc% & Precision & Recall"), "{stdout}");
    assert!(stdout.contains("PCA + Clustering & 1.0 & 1.0 & 1.0 &"), "{stdout}");
    let out = dir.path().join("out/cluster");
    let r = report(&out.join("report.json"));
    assert_eq!(r.accuracy, 1.0);
    for f in ["config.json", "confusion.svg", "confusion.csv", "tsne.svg", "tsne.csv", "model.cxrb"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(out.join("tsne.csv")).unwrap().lines().count(), 15);
    let ck = ClassicalCheckpoint::load(&out.join("model.cxrb")).unwrap();
    assert!(matches!(ck.model, ClassicalModel::Clustering { ref label_map, .. } if label_map.len() == 2));
}

#[test]
fn commands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BLOBS, json!({}));
    let read = |f: &str| fs::read(dir.path().join("out/cluster").join(f)).unwrap();
    ok(&cxr(&["cluster", "--config", cfg.to_str().unwrap()], dir.path()));
    let first: Vec<Vec<u8>> = ["model.cxrb", "tsne.csv", "confusion.csv", "config.json"].map(read).to_vec();
    ok(&cxr(&["cluster", "--config", cfg.to_str().unwrap()], dir.path()));
    let second: Vec<Vec<u8>> = ["model.cxrb", "tsne.csv", "confusion.csv", "config.json"].map(read).to_vec();
    assert_eq!(first, second);
}

#[test]
fn k_below_two_is_rejected_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BLOBS, json!({"classical": {"k": 1}}));
    let out = cxr(&["cluster", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BLOBS, json!({"trian": {}}));
    assert_eq!(code(&cxr(&["cluster", "--config", cfg.to_str().unwrap()], dir.path())), 2);
}

#[test]
fn classical_classifiers_separate_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), [[4, 9], [1, 1], [1, 0]], json!({}));
    for (which, title) in [("logreg", "Logistic Regression"), ("svc", "SVC")] {
        let stdout = ok(&cxr(&["train-ml", which, "--config", cfg.to_str().unwrap()], dir.path()));
        assert!(stdout.contains(&format!("{title} & 1.0 & 1.0 & 1.0 &")), "{stdout}");
        let out = dir.path().join("out").join(which);
        assert_eq!(report(&out.join("report.json")).accuracy, 1.0);
        assert!(out.join("confusion.csv").exists());
        let ck = ClassicalCheckpoint::load(&out.join("model.cxrb")).unwrap();
        match ck.model {
            ClassicalModel::Logreg { model, .. } => {
                // Stratified resplit of 6 normal and 10 pneumonia keeps 4 and 8 in training.
                let (n, n0, n1) = (12.0, 4.0, 8.0);
                assert_eq!(model.class_weights, [n / (2.0 * n0), n / (2.0 * n1)]);
            }
            ClassicalModel::Svc { model, .. } => assert_eq!(model.c, 1.0),
            ClassicalModel::Clustering { .. } => panic!("wrong model kind"),
        }
    }
}

#[test]
fn single_class_training_split_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), [[6, 0], [2, 2], [0, 0]], json!({"resplit": {"enabled": false}}));
    for which in ["logreg", "svc"] {
        let out = cxr(&["train-ml", which, "--config", cfg.to_str().unwrap()], dir.path());
        assert_eq!(code(&out), 3, "{which}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn train_dl_lenet_emits_history_checkpoint_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BLOBS, json!({"train": {"epochs": 3, "batch_size": 4, "augment": false}}));
    let args = ["train-dl", "--config", cfg.to_str().unwrap(), "--arch", "lenet-mod", "--preset", "desk", "--workers", "2"];
    let stdout = ok(&cxr(&args, dir.path()));
    assert!(stdout.starts_with("Model & Acc% & Precision & Recall & Epochs &"), "{stdout}");
    let out = dir.path().join("out/lenet_mod");
    let r = report(&out.join("report.json"));
    assert_eq!(r.epochs, Some(3));
    let ck = NetworkCheckpoint::load(&out.join("checkpoint.cxrb")).unwrap();
    assert_eq!(r.param_count, Some(ck.model.count_params()));
    assert_eq!(ck.progress.epoch, 3);
    let rows: Vec<HistoryRow> = serde_json::from_str(&fs::read_to_string(out.join("history.json")).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(rows.iter().all(|r| r.train_loss.is_some() && r.accuracy.is_some()));
    assert!(out.join("confusion.svg").exists());
}

#[test]
fn resumed_run_matches_the_straight_run() {
    let dir = tempfile::tempdir().unwrap();
    let train = json!({"epochs": 4, "batch_size": 4, "schedule": "constant", "base_lr": 1e-3});
    let cfg = setup(dir.path(), BLOBS, json!({"arch": "cct", "preset": "desk", "train": train}));
    let cfg = cfg.to_str().unwrap();
    ok(&cxr(&["train-dl", "--config", cfg, "--out", "straight"], dir.path()));
    let mut cut: serde_json::Value = serde_json::from_str(&fs::read_to_string(cfg).unwrap()).unwrap();
    cut["train"]["epochs"] = json!(2);
    fs::write(dir.path().join("cut.json"), cut.to_string()).unwrap();
    ok(&cxr(&["train-dl", "--config", "cut.json", "--out", "parted"], dir.path()));
    ok(&cxr(&["train-dl", "--config", cfg, "--out", "parted", "--resume", "parted/cct/checkpoint.cxrb"], dir.path()));
    let hist = |d: &str| -> Vec<u64> {
        let rows: Vec<HistoryRow> = serde_json::from_str(&fs::read_to_string(dir.path().join(d).join("cct/history.json")).unwrap()).unwrap();
        rows.iter().map(|r| r.train_loss.unwrap().to_bits()).collect()
    };
    assert_eq!(hist("parted").len(), 4);
    assert_eq!(hist("parted"), hist("straight"));
    let a = NetworkCheckpoint::load(&dir.path().join("straight/cct/checkpoint.cxrb")).unwrap();
    let b = NetworkCheckpoint::load(&dir.path().join("parted/cct/checkpoint.cxrb")).unwrap();
    assert_eq!(a.model.params(), b.model.params());
}

#[test]
fn resume_with_another_architecture_exits_five() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), BLOBS, json!({"preset": "desk", "train": {"epochs": 1}}));
    let cfg = cfg.to_str().unwrap();
    ok(&cxr(&["train-dl", "--config", cfg, "--arch", "cct"], dir.path()));
    let out = cxr(&["train-dl", "--config", cfg, "--arch", "deep-vit", "--resume", "out/cct/checkpoint.cxrb"], dir.path());
    assert_eq!(code(&out), 5);
}

#[test]
fn divergent_run_exits_four_with_history() {
    let dir = tempfile::tempdir().unwrap();
    let train = json!({"epochs": 3, "batch_size": 4, "schedule": "constant", "base_lr": 1e30, "augment": false});
    let cfg = setup(dir.path(), BLOBS, json!({"arch": "cct", "preset": "desk", "train": train}));
    let out = cxr(&["train-dl", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<HistoryRow> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/cct/history.json")).unwrap()).unwrap();
    assert!(rows.len() < 3);
}

#[test]
fn report_merges_and_rejects_bad_schema() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let t1 = fixtures.join("table1.json");
    let t2 = fixtures.join("table2.json");
    let table = ok(&cxr(&["report", t1.to_str().unwrap(), t2.to_str().unwrap()], dir.path()));
    for n in [
        "58.17", "68.48", "61.28", "71.16", "68.04", "94.46", "75.00", "71.64", "93.94", "77.40", "73.44", "83.05", "79.80",
        "99.74", "80.60", "78.01", "99.23", "84.08", "81.17", "88.25", "84.02", "99.42",
    ] {
        assert!(table.contains(&format!(" {n} ")), "{n}");
    }
    assert_eq!(table.matches(" & 1.0 & ").count(), 2);
    let csv = ok(&cxr(&["report", "--format", "csv", t1.to_str().unwrap()], dir.path()));
    assert_eq!(csv.lines().count(), 4);
    let json_out = ok(&cxr(&["report", "--format", "json", t2.to_str().unwrap()], dir.path()));
    assert_eq!(cxr::report::parse_json(&json_out).unwrap().len(), 5);
    assert_eq!(ok(&cxr(&["report"], dir.path())).lines().count(), 1);
    fs::write(dir.path().join("bad.json"), r#"[{"model": "x"}]"#).unwrap();
    assert_eq!(code(&cxr(&["report", "bad.json"], dir.path())), 5);
}

#[test]
fn epoch_defaults_follow_the_architecture_family() {
    for (kind, epochs, schedule) in [
        (ArchKind::LenetMod, 50, Schedule::Constant),
        (ArchKind::Densenet, 50, Schedule::Cosine),
        (ArchKind::DeepVit, 20, Schedule::WarmupLinear),
        (ArchKind::Cct, 20, Schedule::WarmupLinear),
        (ArchKind::CrossVit, 20, Schedule::WarmupLinear),
    ] {
        let cfg = RunConfig::from_json("{}", &Overrides { arch: Some(kind), ..Default::default() }).unwrap();
        assert_eq!((cfg.train.epochs, cfg.train.schedule), (epochs, schedule), "{}", kind.name());
        assert_eq!(cfg.train.base_lr, 1e-4);
        assert_eq!(cfg.train.warmup_fraction, 0.1);
    }
}

#[test]
fn flags_override_file_over_defaults() {
    let flags = Overrides { seed: Some(7), workers: Some(3), preset: Some(Preset::Desk), ..Default::default() };
    let text = r#"{"arch": "densenet", "train": {"batch_size": 16, "seed": 2}, "classical": {"kmeans_seed": 5}}"#;
    let cfg = RunConfig::from_json(text, &flags).unwrap();
    assert_eq!(cfg.train.epochs, 50);
    assert_eq!(cfg.train.batch_size, 16);
    assert_eq!((cfg.train.seed, cfg.classical.kmeans_seed, cfg.resplit.seed, cfg.classical.tsne.seed), (7, 7, 7, 7));
    assert_eq!(cfg.train.workers, 3);
    assert_eq!(cfg.model_spec().kind(), ArchKind::Densenet);
    assert_eq!(cfg.preset, Preset::Desk);

    let env = Overrides { default_dataset_root: Some("env".into()), ..Default::default() };
    assert_eq!(RunConfig::from_json("{}", &env).unwrap().dataset_root, Some("env".into()));
    assert_eq!(RunConfig::from_json(r#"{"dataset_root": "file"}"#, &env).unwrap().dataset_root, Some("file".into()));
    let flag = Overrides { dataset_root: Some("flag".into()), ..env };
    assert_eq!(RunConfig::from_json(r#"{"dataset_root": "file"}"#, &flag).unwrap().dataset_root, Some("flag".into()));
}

#[test]
fn defaults_mirror_the_reference_setup() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.pipeline.read_side, 256);
    assert_eq!((cfg.pipeline.mean, cfg.pipeline.std), (0.48, 0.22));
    assert_eq!(cfg.model_spec().image_side, 224);
    assert_eq!(cfg.model_spec().in_channels, 3);
    assert_eq!(cfg.classical.k, 2);
    assert_eq!(cfg.classical.svc.c, 1.0);
    assert_eq!(cfg.resplit.test_count, 600);
    assert_eq!(cfg.pipeline.augment.flip_prob, 0.5);
    assert_eq!(cfg.pipeline.augment.rotate_degrees, 5.0);
    assert_eq!(cfg.pipeline.augment.shift_scale_factor, 0.1);
    let round = RunConfig::from_json(&cfg.to_json().unwrap(), &Overrides::default()).unwrap();
    assert_eq!(round, cfg);
}
