//! Command-line interface: dataset generation, augmentation previews,
//! training, inference, evaluation, latency benchmarking, and a parameter
//! census, all over files on disk.
//!
//! Exit codes: `0` success (including `--help`/`--version`), `1` runtime
//! failure (bad files, math preconditions), `2` usage errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::augment::AugmentationConfig;
use crate::bench::{scaling_csv, scaling_report};
use crate::config::RunConfig;
use crate::dataset::{
    fit_to, generate_toy_dataset, load_image, load_mask, probabilities_to_mask,
    save_image, save_mask, BackgroundPool, ManifestSource, SampleSource,
    SegmentationSample, ToySceneConfig,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, export_report, summary_json};
use crate::layers::sigmoid;
use crate::model::{Mode, SegModel};
use crate::tensor::Batch;
use crate::train::fit;
use crate::weights::{load_weights, save_weights};

#[derive(Parser)]
#[command(
    name = "segrt",
    version,
    about = "Real-time semantic segmentation toolkit (pure Rust, CPU-only)",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset of simple playing-field scenes
    GenToy(GenToyArgs),
    /// Swap the background-class pixels of one sample for another image
    ReplaceBg(ReplaceBgArgs),
    /// Write augmented variants of one sample for visual inspection
    AugmentPreview(AugmentPreviewArgs),
    /// Train a model on a dataset directory
    Train(TrainArgs),
    /// Segment one image with trained weights
    Infer(InferArgs),
    /// Measure detection quality of trained weights on a dataset
    Eval(EvalArgs),
    /// Time inference across the resolution ladder and fit ms vs pixels
    Bench(BenchArgs),
    /// Print the per-layer structure and parameter counts
    Params(ParamsArgs),
}

/// Parses `args` (first element is the program name) and runs the chosen
/// command, returning the process exit code instead of exiting, so tests
/// can drive the full CLI in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenToy(args) => gen_toy(args),
        Command::ReplaceBg(args) => replace_bg(args),
        Command::AugmentPreview(args) => augment_preview(args),
        Command::Train(args) => train(args),
        Command::Infer(args) => infer(args),
        Command::Eval(args) => eval(args),
        Command::Bench(args) => bench(args),
        Command::Params(args) => params(args),
    }
}

#[derive(Args)]
struct GenToyArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Number of scenes to generate
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Scene height in pixels (multiple of 4)
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Scene width in pixels (multiple of 4)
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Generator seed: same seed, same scenes
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of scenes assigned to the train split
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Fraction assigned to the val split
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    /// Fraction assigned to the test split (0 disables the split)
    #[arg(long, default_value_t = 0.1)]
    test_frac: f64,
}

fn gen_toy(args: GenToyArgs) -> Result<()> {
    let config = ToySceneConfig {
        height: args.height,
        width: args.width,
    };
    let fractions: Vec<(&str, f64)> = [
        ("train", args.train_frac),
        ("val", args.val_frac),
        ("test", args.test_frac),
    ]
    .into_iter()
    .filter(|&(_, f)| f > 0.0)
    .collect();
    let manifest = generate_toy_dataset(&args.out, args.count, config, args.seed, &fractions)?;
    println!(
        "wrote {} scenes ({}x{}) to {}",
        args.count,
        args.width,
        args.height,
        args.out.display()
    );
    for (name, indices) in &manifest.splits {
        println!("  split {name}: {} scenes", indices.len());
    }
    Ok(())
}

#[derive(Args)]
struct ReplaceBgArgs {
    /// Input image (PNG/JPEG)
    #[arg(long)]
    image: PathBuf,
    /// Its segmentation mask (palette PNG)
    #[arg(long)]
    mask: PathBuf,
    /// Replacement background image
    #[arg(long)]
    background: PathBuf,
    /// Where to write the composited image
    #[arg(long)]
    out: PathBuf,
}

fn replace_bg(args: ReplaceBgArgs) -> Result<()> {
    let image = load_image(&args.image)?;
    let mask = load_mask(&args.mask)?;
    let mut sample = SegmentationSample::new(image, mask)?;
    let background = load_image(&args.background)?;
    crate::augment::ops::replace_background(&mut sample, &background);
    save_image(&sample.image, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct AugmentPreviewArgs {
    /// Input image
    #[arg(long)]
    image: PathBuf,
    /// Its segmentation mask
    #[arg(long)]
    mask: PathBuf,
    /// Output directory for the variants
    #[arg(long)]
    out: PathBuf,
    /// Number of variants to write
    #[arg(long, default_value_t = 8)]
    count: usize,
    /// Master seed for the augmentation streams
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First sample index; variant k uses stream index + k
    #[arg(long, default_value_t = 0)]
    index: u64,
    /// Augmentation settings as JSON (defaults when omitted)
    #[arg(long)]
    config: Option<PathBuf>,
}

fn augment_preview(args: AugmentPreviewArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let config: AugmentationConfig =
                serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
                    path: path.clone(),
                    source: e,
                })?;
            config.validate()?;
            config
        }
        None => AugmentationConfig::default(),
    };
    let image = load_image(&args.image)?;
    let mask = load_mask(&args.mask)?;
    let sample = SegmentationSample::new(image, mask)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for k in 0..args.count {
        let variant =
            crate::augment::apply_pipeline(&sample, &config, args.seed, args.index + k as u64)?;
        let image_path = args.out.join(format!("preview_{k:02}.png"));
        let mask_path = args.out.join(format!("preview_{k:02}_mask.png"));
        save_image(&variant.image, &image_path)?;
        save_mask(&variant.mask, &mask_path)?;
    }
    println!(
        "wrote {} image/mask pairs to {}",
        args.count,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory containing manifest.json
    #[arg(long)]
    data: PathBuf,
    /// Output directory for weights, history, and checkpoints
    #[arg(long)]
    out: PathBuf,
    /// Run configuration JSON ({"train": ..., "augment": ...})
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model input height (multiple of 4)
    #[arg(long, default_value_t = 48)]
    height: usize,
    /// Model input width (multiple of 4)
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Manifest split used for training
    #[arg(long, default_value = "train")]
    train_split: String,
    /// Manifest split used for validation
    #[arg(long, default_value = "val")]
    val_split: String,
    /// Directory of background images swapped in during augmentation
    #[arg(long)]
    backgrounds: Option<PathBuf>,
    /// Disable augmentation entirely
    #[arg(long)]
    no_augment: bool,
    /// Rectifier slope for this build; weight files do not store it, so
    /// pass the same value to infer/eval later
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Override max epochs from the config
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the initial learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Override the batch size
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the seed (weights, shuffling, augmentation)
    #[arg(long)]
    seed: Option<u64>,
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(epochs) = args.epochs {
        config.train.max_epochs = epochs;
    }
    if let Some(lr) = args.lr {
        config.train.initial_lr = lr;
    }
    if let Some(batch_size) = args.batch_size {
        config.train.batch_size = batch_size;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    if config.train.checkpoint_every.is_some() && config.train.checkpoint_dir.is_none() {
        config.train.checkpoint_dir = Some(args.out.join("checkpoints"));
    }
    config.validate()?;

    let manifest_path = args.data.join("manifest.json");
    let train_source = ManifestSource::open(&manifest_path, Some(&args.train_split))?;
    let val_source = ManifestSource::open(&manifest_path, Some(&args.val_split))?;
    let backgrounds = args
        .backgrounds
        .as_ref()
        .map(BackgroundPool::from_dir)
        .transpose()?;
    let augment = if args.no_augment {
        None
    } else {
        Some(&config.augment)
    };

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut model =
        SegModel::seeded(args.height, args.width, config.train.seed)?.with_leaky_alpha(args.alpha)?;
    println!(
        "training {}x{} model on {} samples (validating on {})",
        args.width,
        args.height,
        train_source.len(),
        val_source.len()
    );
    let history = fit(
        &mut model,
        &train_source,
        &val_source,
        &config.train,
        augment,
        backgrounds.as_ref(),
        |r| {
            println!(
                "epoch {:>4}: train {:.4} val {:.4} lr {:.3e} ({:.1}s)",
                r.epoch, r.train_loss, r.val_loss, r.learning_rate, r.seconds
            );
        },
    )?;

    let weights_path = args.out.join("model.sgrt");
    save_weights(&model, &weights_path)?;
    history.write_csv(args.out.join("history.csv"))?;
    println!(
        "best epoch {} (val loss {:.6}){}; weights at {}",
        history.best_epoch,
        history.best_val_loss,
        if history.stopped_early {
            ", stopped early"
        } else {
            ""
        },
        weights_path.display()
    );
    Ok(())
}

#[derive(Args)]
struct InferArgs {
    /// Trained weight file
    #[arg(long)]
    weights: PathBuf,
    /// Image to segment (scaled and cropped to the model resolution)
    #[arg(long)]
    image: PathBuf,
    /// Where to write the predicted palette mask
    #[arg(long)]
    out: PathBuf,
    /// Rectifier slope; must match the value the weights were trained with
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
}

fn infer(args: InferArgs) -> Result<()> {
    let model = load_weights(&args.weights)?
        .with_leaky_alpha(args.alpha)?
        .prepare_inference()?;
    let shape = model.input_shape();
    let image = load_image(&args.image)?;
    let input = fit_to(&image, shape.height, shape.width);
    let logits = model.forward_infer(&Batch::single(input))?;
    let probabilities = sigmoid(&logits);
    let mask = probabilities_to_mask(&probabilities.items()[0])?;
    save_mask(&mask, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct EvalArgs {
    /// Trained weight file
    #[arg(long)]
    weights: PathBuf,
    /// Dataset directory containing manifest.json
    #[arg(long)]
    data: PathBuf,
    /// Manifest split to evaluate (all entries when omitted)
    #[arg(long)]
    split: Option<String>,
    /// Output directory for PR curves and the summary
    #[arg(long)]
    out: PathBuf,
    /// Evaluation batch size
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Rectifier slope; must match the value the weights were trained with
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Also print the summary as JSON to stdout
    #[arg(long)]
    json: bool,
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = load_weights(&args.weights)?
        .with_leaky_alpha(args.alpha)?
        .prepare_inference()?;
    let source = ManifestSource::open(args.data.join("manifest.json"), args.split.as_deref())?;
    let report = evaluate(&model, &source, args.batch_size)?;
    export_report(&report, &args.out)?;
    if args.json {
        println!("{}", summary_json(&report));
    } else {
        for class in &report.classes {
            println!("AP {:<6} {:.4}", class.label, class.average_precision);
        }
        println!(
            "micro-mAP {:.4}, pixel accuracy {:.4}, mean loss {:.4} over {} samples",
            report.micro_map, report.pixel_accuracy, report.mean_loss, report.sample_count
        );
    }
    println!("report written to {}", args.out.display());
    Ok(())
}

#[derive(Args)]
struct BenchArgs {
    /// Timed passes per resolution
    #[arg(long, default_value_t = 9)]
    iterations: usize,
    /// Untimed passes before measuring
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    /// Seed for weights and the input image
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the CSV to a file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of CSV
    #[arg(long)]
    json: bool,
}

fn bench(args: BenchArgs) -> Result<()> {
    let report = scaling_report(args.iterations, args.warmup, args.seed)?;
    let csv = scaling_csv(&report);
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report always serializes")
        );
    } else {
        print!("{csv}");
    }
    if let Some(path) = &args.out {
        std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[derive(Args)]
struct ParamsArgs {
    /// Input height used for the output-shape column
    #[arg(long, default_value_t = 120)]
    height: usize,
    /// Input width used for the output-shape column
    #[arg(long, default_value_t = 160)]
    width: usize,
    /// Print JSON instead of a table
    #[arg(long)]
    json: bool,
}

fn params(args: ParamsArgs) -> Result<()> {
    let model: SegModel<f32> = SegModel::new(args.height, args.width)?;
    let table = model.layer_table();
    let counts = model.count_parameters();
    let folded = {
        let mut infer = model.clone();
        infer.set_mode(Mode::Infer);
        infer.prepare_inference()?.count_parameters().trainable
    };
    if args.json {
        let rows: Vec<serde_json::Value> = table
            .iter()
            .map(|row| {
                serde_json::json!({
                    "name": row.name,
                    "output": format!(
                        "{}x{}x{}",
                        row.output.height, row.output.width, row.output.channels
                    ),
                    "trainable": row.trainable,
                })
            })
            .collect();
        let value = serde_json::json!({
            "layers": rows,
            "trainable": counts.trainable,
            "running_stats": counts.running_stats,
            "after_folding": folded,
        });
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("table always serializes")
        );
    } else {
        let name_width = table.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        println!("{:<name_width$}  {:<12} {:>9}", "layer", "output", "params");
        for row in &table {
            let output = format!(
                "{}x{}x{}",
                row.output.height, row.output.width, row.output.channels
            );
            println!("{:<name_width$}  {:<12} {:>9}", row.name, output, row.trainable);
        }
        println!("trainable parameters:     {}", counts.trainable);
        println!("running statistics:       {}", counts.running_stats);
        println!("after batch-norm folding: {folded}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["segrt", "--help"]), 0);
        assert_eq!(run(["segrt", "--version"]), 0);
        assert_eq!(run(["segrt", "params", "--help"]), 0);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["segrt"]), 2);
        assert_eq!(run(["segrt", "no-such-command"]), 2);
        assert_eq!(run(["segrt", "gen-toy"]), 2, "missing required --out");
        assert_eq!(run(["segrt", "params", "--height", "abc"]), 2);
        assert_eq!(run(["segrt", "bench", "--bogus-flag"]), 2);
    }

    #[test]
    fn runtime_errors_exit_one() {
        assert_eq!(
            run(["segrt", "infer", "--weights", "/nonexistent.sgrt",
                 "--image", "/nonexistent.png", "--out", "/tmp/x.png"]),
            1
        );
        // Structurally valid usage, but the resolution is rejected.
        assert_eq!(run(["segrt", "params", "--height", "7"]), 1);
    }

    #[test]
    fn params_succeeds_on_valid_resolutions() {
        assert_eq!(run(["segrt", "params"]), 0);
        assert_eq!(run(["segrt", "params", "--json", "--height", "48", "--width", "64"]), 0);
    }
}
