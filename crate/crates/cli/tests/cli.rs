use std::path::Path;
use std::process::{Command, Output};

use bimf::factorization::{Checkpoint, ColdInputs};
use serde_json::{json, Value};
use tempfile::TempDir;

fn bimf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn bimf")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_vec_pretty(v).unwrap()).unwrap();
}

fn synth(dir: &Path) {
    write_json(
        &dir.join("synth.json"),
        &json!({"seed": 3, "synthetic": {
            "num_users": 40, "num_items": 30, "latent_dim": 3,
            "observed_fraction": 0.2, "image_height": 10, "image_width": 10
        }}),
    );
    let out = bimf(dir, &["synth", "--config", "synth.json", "--out", "data"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn run_config(output_dir: &str) -> Value {
    json!({
        "ratings": "data/ratings.csv",
        "images": "data/images",
        "model": "bi_isfmf",
        "hyper": {"k": 3, "outer_max_iters": 3, "cnn_epochs_per_iter": 1,
                  "optimizer": {"learning_rate": 0.01, "momentum": 0.9, "batch_size": 8}},
        "architecture": {
            "input": {"channels": 3, "height": 10, "width": 10},
            "layers": [{"conv": {"kernel": 3, "channels": 2}}, "relu",
                       {"maxpool": {"window": 2}}, "flatten", {"dense": {"out_dim": 8}}]
        },
        "cold_item_fraction": 0.2,
        "grid": {"lambda_u": [0.1, 1], "lambda_v": [1]},
        "compare": {"kinds": ["pmf", "bi_isfmf"], "train_fractions": [0.6, 0.8]},
        "sweep": {"image_counts": [1, 2], "repeats": 2},
        "output_dir": output_dir
    })
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    synth(dir.path());
    dir
}

fn train(dir: &Path, name: &str, cfg: &Value) -> Output {
    let file = format!("{name}.json");
    write_json(&dir.join(&file), cfg);
    bimf(dir, &["train", "--config", &file])
}

#[test]
fn synth_writes_headered_csv_and_one_png_per_item() {
    let dir = setup();
    let data = dir.path().join("data");
    let csv = std::fs::read_to_string(data.join("ratings.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("user_id,item_id,rating"));
    let pngs = std::fs::read_dir(data.join("images")).unwrap().count();
    assert_eq!(pngs, 30);
    assert!(data.join("ground_truth.json").exists());
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let dir = setup();
    assert_eq!(code(&train(dir.path(), "a", &run_config("a"))), 0);
    assert_eq!(code(&train(dir.path(), "b", &run_config("b"))), 0);
    let a = std::fs::read(dir.path().join("a/model.bimf")).unwrap();
    let b = std::fs::read(dir.path().join("b/model.bimf")).unwrap();
    assert_eq!(a, b);
    for f in ["train_report.json", "eval_report.json", "effective_config.json", "test.bids"] {
        assert!(dir.path().join("a").join(f).exists(), "{f} missing");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = setup();
    write_json(&dir.path().join("c.json"), &run_config("c"));
    let out = bimf(dir.path(), &["--seed", "9", "train", "--config", "c.json"]);
    assert_eq!(code(&out), 0);
    let eff: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("c/effective_config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(eff["seed"], 9);
    assert_eq!(eff["hyper"]["seed"], 9);
}

#[test]
fn missing_image_dir_is_an_input_error() {
    let dir = setup();
    let mut cfg = run_config("x");
    cfg["images"] = json!("nowhere");
    let out = train(dir.path(), "x", &cfg);
    assert_eq!(code(&out), 2);
}

#[test]
fn zero_lambda_is_an_input_error() {
    let dir = setup();
    let mut cfg = run_config("x");
    cfg["hyper"]["lambda_v"] = json!(0.0);
    assert_eq!(code(&train(dir.path(), "x", &cfg)), 2);
}

#[test]
fn unknown_config_field_is_an_input_error() {
    let dir = setup();
    let mut cfg = run_config("x");
    cfg["hyper"]["epochs"] = json!(3);
    assert_eq!(code(&train(dir.path(), "x", &cfg)), 2);
}

#[test]
fn divergence_exits_3_and_keeps_last_good_state() {
    let dir = setup();
    let mut cfg = run_config("d");
    cfg["hyper"]["optimizer"]["learning_rate"] = json!(1e8);
    let out = train(dir.path(), "d", &cfg);
    assert_eq!(code(&out), 3);
    let ckpt = Checkpoint::load(dir.path().join("d/last_good.bimf")).unwrap();
    assert!(ckpt.u.is_finite() && ckpt.v.is_finite());
}

#[test]
fn eval_of_empty_file_is_an_input_error() {
    let dir = setup();
    assert_eq!(code(&train(dir.path(), "m", &run_config("m"))), 0);
    std::fs::write(dir.path().join("empty.csv"), "user_id,item_id,rating\n").unwrap();
    let out = bimf(
        dir.path(),
        &["eval", "--checkpoint", "m/model.bimf", "--data", "empty.csv"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_report_matches_train_report() {
    let dir = setup();
    assert_eq!(code(&train(dir.path(), "m", &run_config("m"))), 0);
    let out = bimf(
        dir.path(),
        &[
            "eval", "--checkpoint", "m/model.bimf", "--data", "m/test.bids",
            "--images", "data/images", "--out", "again.json",
        ],
    );
    assert_eq!(code(&out), 0);
    let read = |p: &str| -> Value {
        serde_json::from_slice(&std::fs::read(dir.path().join(p)).unwrap()).unwrap()
    };
    assert_eq!(read("m/eval_report.json"), read("again.json"));
}

#[test]
fn predict_matches_library() {
    let dir = setup();
    assert_eq!(code(&train(dir.path(), "m", &run_config("m"))), 0);
    let ckpt = Checkpoint::load(dir.path().join("m/model.bimf")).unwrap();
    let j = (0..ckpt.item_ids.len()).find(|&j| !ckpt.is_cold_item(j)).unwrap();
    let expected = ckpt.predict_with(0, j, &ColdInputs::default()).unwrap();

    let by_id = bimf(
        dir.path(),
        &["predict", "--checkpoint", "m/model.bimf", "--user", &ckpt.user_ids[0], "--item", &ckpt.item_ids[j]],
    );
    assert_eq!(code(&by_id), 0);
    let got: f64 = stdout(&by_id).trim().parse().unwrap();
    assert_eq!(got.to_bits(), expected.to_bits());

    let by_index = bimf(
        dir.path(),
        &["predict", "--checkpoint", "m/model.bimf", "--user", "0", "--item", &j.to_string()],
    );
    assert_eq!(stdout(&by_index), stdout(&by_id));

    let unknown = bimf(
        dir.path(),
        &["predict", "--checkpoint", "m/model.bimf", "--user", "0", "--item", "no-such-item"],
    );
    assert_eq!(code(&unknown), 2);
}

#[test]
fn compare_writes_table_with_improvement_column() {
    let dir = setup();
    write_json(&dir.path().join("c.json"), &run_config("cmp"));
    let out = bimf(dir.path(), &["compare", "--config", "c.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cmp/comparison.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("model,train_fraction,rmse_warm,rmse_cold,rmse_all,imp_pct")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.len() == 6));
    let with_imp = rows.iter().filter(|r| !r[5].is_empty()).count();
    assert_eq!(with_imp, 2);
    assert!(dir.path().join("cmp/comparison.txt").exists());
}

#[test]
fn grid_and_sweep_outputs() {
    let dir = setup();
    write_json(&dir.path().join("g.json"), &run_config("g"));
    assert_eq!(code(&bimf(dir.path(), &["grid", "--config", "g.json"])), 0);
    let grid = std::fs::read_to_string(dir.path().join("g/grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);

    assert_eq!(code(&bimf(dir.path(), &["sweep", "--config", "g.json"])), 0);
    let sweep = std::fs::read_to_string(dir.path().join("g/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn ingest_packs_only_items_with_images() {
    let dir = setup();
    std::fs::remove_file(dir.path().join("data/images/i0.png")).ok();
    let out = bimf(
        dir.path(),
        &[
            "ingest", "--ratings", "data/ratings.csv", "--images", "data/images",
            "--out", "packed/all.bids", "--image-size", "10",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ids: Value = serde_json::from_slice(
        &std::fs::read(dir.path().join("packed/all.bids.ids.json")).unwrap(),
    )
    .unwrap();
    let items: Vec<&str> = ids["items"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(!items.contains(&"i0"));
    assert!(!items.is_empty());
}

#[test]
fn synth_with_one_user_is_rejected() {
    let dir = TempDir::new().unwrap();
    write_json(&dir.path().join("s.json"), &json!({"synthetic": {"num_users": 1}}));
    let out = bimf(dir.path(), &["synth", "--config", "s.json", "--out", "d"]);
    assert_eq!(code(&out), 2);
}

