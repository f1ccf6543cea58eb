//! End-to-end checks of the command-line binary: a full
//! generate → train → infer → eval → merge round trip on a micro setup,
//! plus the error surfaces a user is most likely to hit.

use std::path::Path;
use std::process::{Command, Output};

fn ringseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ringseq"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn succeed(args: &[&str]) -> String {
    let out = ringseq(args);
    assert!(
        out.status.success(),
        "`ringseq {}` failed:\nstdout: {}\nstderr: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fail(args: &[&str]) -> String {
    let out = ringseq(args);
    assert!(
        !out.status.success(),
        "`ringseq {}` unexpectedly succeeded:\nstdout: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const MICRO_TRAIN_TOML: &str = "\
preset = \"tiny\"
learning_rate = 1e-3
max_steps = 4
batch_size = 2
checkpoint_interval = 2
sinkhorn_iterations = 10
patch_size = 16
embed_dim = 16
encoder_layers = 1
decoder_layers = 1
heads = 2
mlp_ratio = 2
";

#[test]
fn full_round_trip_through_every_subcommand() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let pred = root.path().join("pred");
    let scores = root.path().join("scores");

    // Generate a small dataset and check the artifacts exist.
    let stdout = succeed(&[
        "generate",
        "--preset",
        "tiny",
        "--seed",
        "5",
        "--count",
        "3",
        "--out",
        path(&data),
    ]);
    assert!(stdout.contains("generated 3"));
    assert!(data.join("manifest.json").exists());
    assert!(data.join("annotations.json").exists());
    for i in 0..3 {
        assert!(data.join(format!("images/scene_{i:08}.png")).exists());
    }

    // Train a very small model for a few steps.
    let config = root.path().join("train.toml");
    std::fs::write(&config, MICRO_TRAIN_TOML).unwrap();
    let stdout = succeed(&[
        "train",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--out",
        path(&run),
    ]);
    assert!(stdout.contains("trained 4 steps"));
    let checkpoint = run.join("model.bin");
    assert!(checkpoint.exists());
    assert!(run.join("checkpoint_000002.bin").exists());
    let curve = std::fs::read_to_string(run.join("training_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5, "header plus one row per step");

    // Run inference on the first image, plain and tiled.
    let image = data.join("images/scene_00000000.png");
    let stdout = succeed(&[
        "infer",
        "--checkpoint",
        path(&checkpoint),
        "--image",
        path(&image),
        "--out",
        path(&pred),
    ]);
    assert!(stdout.contains("from 1 patches"));
    let polygons: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pred.join("polygons.json")).unwrap())
            .unwrap();
    assert_eq!(polygons["images"][0]["file_name"], "scene_00000000.png");
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pred.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["totals"]["patches"], 1);

    let tiled = root.path().join("pred_tiled");
    succeed(&[
        "infer",
        "--checkpoint",
        path(&checkpoint),
        "--image",
        path(&image),
        "--out",
        path(&tiled),
        "--tile",
        "--patch-size",
        "64",
    ]);
    assert!(tiled.join("polygons.json").exists());

    // Evaluating the ground truth against itself scores perfectly.
    let stdout = succeed(&[
        "eval",
        "--pred",
        path(&data),
        "--gt",
        path(&data),
        "--out",
        path(&scores),
    ]);
    assert!(stdout.contains("scenes evaluated: 3"));
    assert!(stdout.contains("mean iou: 1.0000"));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scores.join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["aggregate"]["scenes"], 3);
    assert!(scores.join("metrics.csv").exists());

    // Merge passes disjoint ground-truth polygons through unchanged.
    let merged = root.path().join("merged.json");
    let stdout = succeed(&[
        "merge",
        "--in",
        path(&data.join("annotations.json")),
        "--out",
        path(&merged),
    ]);
    assert!(stdout.contains("merged 3 scenes"));
    assert!(merged.exists());
}

#[test]
fn unknown_preset_is_a_clear_error() {
    let dir = tempfile::tempdir().unwrap();
    let stderr = fail(&[
        "generate",
        "--preset",
        "nope",
        "--count",
        "1",
        "--out",
        path(&dir.path().join("d")),
    ]);
    assert!(stderr.contains("unknown preset"), "stderr: {stderr}");
}

#[test]
fn train_rejects_unknown_config_keys_and_wrong_dataset() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("roads");
    succeed(&[
        "generate",
        "--preset",
        "tiny_roads",
        "--count",
        "2",
        "--out",
        path(&data),
    ]);

    let bad_key = root.path().join("bad.toml");
    std::fs::write(&bad_key, "preset = \"tiny\"\nlerning_rate = 0.1\n").unwrap();
    let stderr = fail(&[
        "train",
        "--config",
        path(&bad_key),
        "--data",
        path(&data),
        "--out",
        path(&root.path().join("out")),
    ]);
    assert!(stderr.contains("lerning_rate"), "stderr: {stderr}");

    let config = root.path().join("train.toml");
    std::fs::write(&config, MICRO_TRAIN_TOML).unwrap();
    let stderr = fail(&[
        "train",
        "--config",
        path(&config),
        "--data",
        path(&data),
        "--out",
        path(&root.path().join("out")),
    ]);
    assert!(
        stderr.contains("preset"),
        "mismatched dataset should name the presets: {stderr}"
    );
}

#[test]
fn infer_rejects_mismatched_sizes() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    succeed(&["generate", "--preset", "tiny", "--count", "1", "--out", path(&data)]);
    let config = root.path().join("train.toml");
    std::fs::write(&config, MICRO_TRAIN_TOML).unwrap();
    succeed(&["train", "--config", path(&config), "--data", path(&data), "--out", path(&run)]);

    // An image whose size does not match the model input.
    let odd = root.path().join("odd.png");
    image::RgbImage::new(32, 32).save(&odd).unwrap();
    let stderr = fail(&[
        "infer",
        "--checkpoint",
        path(&run.join("model.bin")),
        "--image",
        path(&odd),
        "--out",
        path(&root.path().join("pred")),
    ]);
    assert!(stderr.contains("64"), "should mention the expected size: {stderr}");

    // Tile mode insists the requested patch size equals the model input.
    let image = data.join("images/scene_00000000.png");
    let stderr = fail(&[
        "infer",
        "--checkpoint",
        path(&run.join("model.bin")),
        "--image",
        path(&image),
        "--out",
        path(&root.path().join("pred2")),
        "--tile",
        "--patch-size",
        "32",
    ]);
    assert!(stderr.contains("patch size 32"), "stderr: {stderr}");
}

#[test]
fn eval_reports_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let stderr = fail(&[
        "eval",
        "--pred",
        path(&dir.path().join("missing")),
        "--gt",
        path(&dir.path().join("missing")),
        "--out",
        path(&dir.path().join("out")),
    ]);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
}
