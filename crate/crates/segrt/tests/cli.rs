//! End-to-end command-line flows over real files: generate data, train,
//! infer, evaluate, benchmark — all through `segrt::cli::run`, plus a few
//! spawns of the actual binary to pin process exit codes.

use std::path::Path;
use std::process::Command;

use segrt::cli::run;
use segrt::dataset::{load_mask, save_image, ManifestSource, SampleSource};
use segrt::tensor::{Shape, Tensor};

fn run_args(args: &[&str]) -> i32 {
    run(args.iter().copied())
}

fn assert_ok(args: &[&str]) {
    assert_eq!(run_args(args), 0, "command failed: {args:?}");
}

#[test]
fn gen_toy_writes_a_deterministic_loadable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap();
    assert_ok(&[
        "segrt", "gen-toy", "--out", data_s, "--count", "10", "--height", "16",
        "--width", "16", "--seed", "5",
    ]);
    assert!(data.join("manifest.json").exists());
    assert!(data.join("images/00000.png").exists());
    assert!(data.join("images/00009.png").exists());
    assert!(data.join("masks/00009.png").exists());

    let train = ManifestSource::open(data.join("manifest.json"), Some("train")).unwrap();
    let val = ManifestSource::open(data.join("manifest.json"), Some("val")).unwrap();
    let test = ManifestSource::open(data.join("manifest.json"), Some("test")).unwrap();
    assert_eq!(train.len() + val.len() + test.len(), 10);
    assert!(train.len() >= val.len() && train.len() >= test.len());
    // Every sample loads and has the requested shape.
    let sample = train.load(0).unwrap();
    assert_eq!(sample.image.shape(), Shape::new(16, 16, 3));

    // Same seed, same bytes.
    let again = dir.path().join("again");
    let again_s = again.to_str().unwrap();
    assert_ok(&[
        "segrt", "gen-toy", "--out", again_s, "--count", "10", "--height", "16",
        "--width", "16", "--seed", "5",
    ]);
    for rel in ["manifest.json", "images/00003.png", "masks/00007.png"] {
        assert_eq!(
            std::fs::read(data.join(rel)).unwrap(),
            std::fs::read(again.join(rel)).unwrap(),
            "{rel} differs between runs"
        );
    }
}

#[test]
fn replace_bg_swaps_only_background_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_ok(&[
        "segrt", "gen-toy", "--out", data.to_str().unwrap(), "--count", "1",
        "--height", "16", "--width", "16", "--seed", "2",
    ]);
    let image_path = data.join("images/00000.png");
    let mask_path = data.join("masks/00000.png");
    // Solid blue background of the same size.
    let mut background = Tensor::filled(Shape::new(16, 16, 3), 0.0);
    for y in 0..16 {
        for x in 0..16 {
            background.set(y, x, 2, 1.0);
        }
    }
    let bg_path = dir.path().join("bg.png");
    save_image(&background, &bg_path).unwrap();

    let out_path = dir.path().join("swapped.png");
    assert_ok(&[
        "segrt", "replace-bg", "--image", image_path.to_str().unwrap(),
        "--mask", mask_path.to_str().unwrap(),
        "--background", bg_path.to_str().unwrap(),
        "--out", out_path.to_str().unwrap(),
    ]);

    let original = segrt::dataset::load_image(&image_path).unwrap();
    let swapped = segrt::dataset::load_image(&out_path).unwrap();
    let mask = load_mask(&mask_path).unwrap();
    let mut background_pixels = 0;
    for y in 0..16 {
        for x in 0..16 {
            for c in 0..3 {
                let expected = if mask.get(y, x) == 0 {
                    if c == 2 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    original.get(y, x, c)
                };
                assert_eq!(swapped.get(y, x, c), expected, "pixel ({y},{x}) ch {c}");
            }
            if mask.get(y, x) == 0 {
                background_pixels += 1;
            }
        }
    }
    assert!(background_pixels > 0, "scene needs background to prove the swap");
}

#[test]
fn augment_preview_is_deterministic_and_mask_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_ok(&[
        "segrt", "gen-toy", "--out", data.to_str().unwrap(), "--count", "1",
        "--height", "16", "--width", "16", "--seed", "3",
    ]);
    let config_path = dir.path().join("aug.json");
    std::fs::write(&config_path, r#"{"flip_probability": 1.0}"#).unwrap();

    let image = data.join("images/00000.png");
    let mask = data.join("masks/00000.png");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        assert_ok(&[
            "segrt", "augment-preview",
            "--image", image.to_str().unwrap(),
            "--mask", mask.to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--count", "3", "--seed", "9",
            "--config", config_path.to_str().unwrap(),
        ]);
    }
    for k in 0..3 {
        let img_rel = format!("preview_{k:02}.png");
        let mask_rel = format!("preview_{k:02}_mask.png");
        assert_eq!(
            std::fs::read(out_a.join(&img_rel)).unwrap(),
            std::fs::read(out_b.join(&img_rel)).unwrap(),
            "{img_rel} not deterministic"
        );
        // Variant masks are valid palette masks.
        load_mask(out_a.join(&mask_rel)).unwrap();
    }

    // A bad config exits 1 (runtime error, not usage).
    std::fs::write(&config_path, r#"{"flip_probability": 2.0}"#).unwrap();
    assert_eq!(
        run_args(&[
            "segrt", "augment-preview",
            "--image", image.to_str().unwrap(),
            "--mask", mask.to_str().unwrap(),
            "--out", out_a.to_str().unwrap(),
            "--config", config_path.to_str().unwrap(),
        ]),
        1
    );
}

#[test]
fn train_infer_eval_bench_flow() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let data_s = data.to_str().unwrap();
    assert_ok(&[
        "segrt", "gen-toy", "--out", data_s, "--count", "12", "--height", "16",
        "--width", "16", "--seed", "1",
    ]);

    // Train twice with the same seed: identical weights out.
    let run_a = dir.path().join("run_a");
    let run_b = dir.path().join("run_b");
    for out in [&run_a, &run_b] {
        assert_ok(&[
            "segrt", "train", "--data", data_s, "--out", out.to_str().unwrap(),
            "--height", "16", "--width", "16", "--epochs", "2",
            "--batch-size", "4", "--seed", "3", "--no-augment",
        ]);
    }
    let weights = run_a.join("model.sgrt");
    assert!(weights.exists());
    assert_eq!(
        std::fs::read(&weights).unwrap(),
        std::fs::read(run_b.join("model.sgrt")).unwrap(),
        "training is not deterministic through the CLI"
    );
    let history = std::fs::read_to_string(run_a.join("history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(lines.len(), 3, "header + one row per epoch");
    assert_eq!(lines[0], "epoch,train_loss,val_loss,learning_rate,seconds");

    // Inference writes a palette mask at the model resolution.
    let weights_s = weights.to_str().unwrap();
    let pred = dir.path().join("pred.png");
    assert_ok(&[
        "segrt", "infer", "--weights", weights_s,
        "--image", data.join("images/00000.png").to_str().unwrap(),
        "--out", pred.to_str().unwrap(),
    ]);
    let mask = load_mask(&pred).unwrap();
    assert_eq!((mask.height(), mask.width()), (16, 16));

    // Evaluation exports the full report.
    let eval_dir = dir.path().join("eval");
    let eval_s = eval_dir.to_str().unwrap();
    assert_ok(&[
        "segrt", "eval", "--weights", weights_s, "--data", data_s,
        "--out", eval_s, "--batch-size", "4",
    ]);
    for name in [
        "summary.csv", "summary.json", "pr_ball.csv", "pr_field.csv",
        "pr_line.csv", "pr_goal.csv", "pr_robot.csv", "pr_all.csv",
    ] {
        assert!(eval_dir.join(name).exists(), "{name} missing");
    }
    let summary = std::fs::read_to_string(eval_dir.join("summary.csv")).unwrap();
    assert!(summary.starts_with("class,average_precision,positives,negatives\nBall,"));
    assert_ok(&[
        "segrt", "eval", "--weights", weights_s, "--data", data_s,
        "--out", eval_s, "--batch-size", "4", "--json",
    ]);

    // Benchmark CSV lands in a file.
    let bench_csv = dir.path().join("bench.csv");
    assert_ok(&[
        "segrt", "bench", "--iterations", "1", "--warmup", "0",
        "--out", bench_csv.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(&bench_csv).unwrap();
    assert!(csv.starts_with("# host: "));
    assert!(csv.contains("\nwidth,height,pixels,"));
    assert_eq!(csv.lines().count(), 3 + 6, "two comments, header, six rows");

    // Unknown split and corrupt weights are runtime errors.
    assert_eq!(
        run_args(&[
            "segrt", "train", "--data", data_s,
            "--out", dir.path().join("x").to_str().unwrap(),
            "--height", "16", "--width", "16", "--epochs", "1",
            "--val-split", "nope",
        ]),
        1
    );
    let corrupt = dir.path().join("corrupt.sgrt");
    std::fs::write(&corrupt, b"not a weight file at all").unwrap();
    assert_eq!(
        run_args(&[
            "segrt", "infer", "--weights", corrupt.to_str().unwrap(),
            "--image", data.join("images/00000.png").to_str().unwrap(),
            "--out", pred.to_str().unwrap(),
        ]),
        1
    );
}

fn binary() -> &'static Path {
    Path::new(env!("CARGO_BIN_EXE_segrt"))
}

#[test]
fn spawned_binary_reports_exit_codes_and_param_counts() {
    let help = Command::new(binary()).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for name in [
        "gen-toy", "replace-bg", "augment-preview", "train", "infer", "eval",
        "bench", "params",
    ] {
        assert!(text.contains(name), "--help must list {name}");
    }

    let usage = Command::new(binary()).arg("definitely-not-a-command").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let params = Command::new(binary()).arg("params").output().unwrap();
    assert_eq!(params.status.code(), Some(0));
    let text = String::from_utf8_lossy(&params.stdout);
    assert!(text.contains("9282"), "trainable total missing:\n{text}");
    assert!(text.contains("586"), "running-stat total missing");
    assert!(text.contains("8696"), "folded total missing");

    let json = Command::new(binary())
        .args(["params", "--json"])
        .output()
        .unwrap();
    assert_eq!(json.status.code(), Some(0));
    let value: serde_json::Value =
        serde_json::from_slice(&json.stdout).expect("params --json emits valid JSON");
    assert_eq!(value["trainable"], 9282);
    assert_eq!(value["running_stats"], 586);
    assert_eq!(value["after_folding"], 8696);
    assert_eq!(value["layers"].as_array().unwrap().len(), 26);

    let runtime = Command::new(binary())
        .args(["params", "--height", "7"])
        .output()
        .unwrap();
    assert_eq!(runtime.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&runtime.stderr).starts_with("error: "));
}
