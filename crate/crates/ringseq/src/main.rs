//! Command-line surface: dataset generation, training, inference,
//! evaluation and polygon merging.
//!
//! Timing goes to stderr; every file written (and everything on stdout)
//! is a pure function of the arguments and seeds, so repeated runs are
//! byte-identical.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ringseq::data::{generate_dataset, save_dataset, write_annotations, CocoScene, Preset};
use ringseq::pipeline::{
    evaluate_datasets, infer, infer_patched, load_model, load_polygon_scenes, merge_union, train,
    write_reports, InferenceResult, TrainConfig,
};
use ringseq::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ringseq",
    about = "Polygon extraction from raster images via vertex-sequence prediction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (images, annotations, manifest).
    Generate {
        /// Scene preset: tiny, tiny_roads, tile or full_scale.
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of scenes.
        #[arg(long)]
        count: usize,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Split label recorded in the manifest.
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Train on a generated dataset.
    Train {
        /// TOML config; omitted keys fall back to defaults.
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory from `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoints and the training curve.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict polygons on one image.
    Infer {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input PNG.
        #[arg(long)]
        image: PathBuf,
        /// Output directory for polygons and statistics.
        #[arg(long)]
        out: PathBuf,
        /// Tile a large image into overlapping patches and merge.
        #[arg(long)]
        tile: bool,
        /// Patch edge in tile mode; must equal the model input size.
        #[arg(long)]
        patch_size: Option<usize>,
        /// Fractional patch overlap in tile mode.
        #[arg(long, default_value_t = 0.1)]
        overlap: f64,
    },
    /// Score predicted polygons against ground truth.
    Eval {
        /// Predictions: an annotation file or a dataset directory.
        #[arg(long)]
        pred: PathBuf,
        /// Ground truth: an annotation file or a dataset directory.
        #[arg(long)]
        gt: PathBuf,
        /// Output directory for metrics.json and metrics.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge overlapping polygons in an annotation file.
    Merge {
        /// Input annotation file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output annotation file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { preset, seed, count, out, split } => {
            let preset = Preset::from_name(&preset)
                .ok_or_else(|| Error::Config(format!("unknown preset `{preset}`")))?;
            let (manifest, samples) = generate_dataset(&preset, seed, count, &split);
            save_dataset(&out, &manifest, &samples)?;
            println!(
                "generated {count} `{}` scenes (seed {seed}, split {split}) into {}",
                preset.name,
                out.display()
            );
            Ok(())
        }
        Command::Train { config, data, out } => {
            let config = TrainConfig::from_toml_path(&config)?;
            let outcome = train(&config, &data, &out)?;
            println!(
                "trained {} steps ({} skipped), final token accuracy {:.4}",
                outcome.steps_taken, outcome.skipped_steps, outcome.final_accuracy
            );
            println!("checkpoint: {}", outcome.checkpoint_path.display());
            println!("curve: {}", outcome.curve_path.display());
            Ok(())
        }
        Command::Infer { checkpoint, image, out, tile, patch_size, overlap } => {
            let loaded = load_model(&checkpoint)?;
            let input = image::open(&image)?.into_rgb8();
            let result = if tile {
                let model_size = loaded.model.config().image_size;
                if let Some(requested) = patch_size {
                    if requested != model_size {
                        return Err(Error::Config(format!(
                            "patch size {requested} does not match the model input size \
                             {model_size}"
                        )));
                    }
                }
                infer_patched(&loaded.model, &input, overlap)?
            } else {
                infer(&loaded.model, &input)?
            };
            write_inference(&out, &image, &input, &result)?;
            let failed = result.patches.iter().filter(|p| p.failed).count();
            println!(
                "{} polygons from {} patches ({} failed) into {}",
                result.polygons.len(),
                result.patches.len(),
                failed,
                out.display()
            );
            eprintln!("inference took {:.3}s", result.seconds);
            Ok(())
        }
        Command::Eval { pred, gt, out } => {
            let (pred_scenes, pred_warnings) = load_polygon_scenes(&pred)?;
            let (gt_scenes, gt_warnings) = load_polygon_scenes(&gt)?;
            for (label, warnings) in [("pred", pred_warnings), ("gt", gt_warnings)] {
                if warnings.rle_skipped > 0 {
                    eprintln!("{label}: skipped {} non-polygon annotations", warnings.rle_skipped);
                }
            }
            let summary = evaluate_datasets(&pred_scenes, &gt_scenes);
            let (json_path, csv_path) = write_reports(&out, &summary)?;
            for id in &summary.skipped_pred_ids {
                println!("skipped prediction {id}: no ground-truth scene");
            }
            for id in &summary.skipped_gt_ids {
                println!("skipped ground-truth {id}: no prediction");
            }
            let a = &summary.aggregate;
            let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            println!("scenes evaluated: {}", a.scenes);
            println!("mean iou: {}  pooled iou: {}", show(a.iou), show(a.iou_pooled));
            println!("mean c_iou: {}  mean polis: {}", show(a.c_iou), show(a.polis));
            println!(
                "mean mta: {} deg  pooled n_ratio: {}",
                show(a.mta_degrees),
                show(a.n_ratio_pooled)
            );
            println!("reports: {} {}", json_path.display(), csv_path.display());
            Ok(())
        }
        Command::Merge { input, out } => {
            let (scenes, warnings) = load_polygon_scenes(&input)?;
            if warnings.rle_skipped > 0 {
                eprintln!("skipped {} non-polygon annotations", warnings.rle_skipped);
            }
            let merged: Vec<CocoScene> = scenes
                .into_iter()
                .map(|scene| CocoScene {
                    polygons: merge_union(&scene.polygons, scene.width, scene.height),
                    ..scene
                })
                .collect();
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            write_annotations(&out, &merged)?;
            println!("merged {} scenes into {}", merged.len(), out.display());
            Ok(())
        }
    }
}

/// Writes `polygons.json` (annotations in tile space) and `stats.json`
/// (per-patch decoding diagnostics; no timing, so reruns are identical).
fn write_inference(
    out: &Path,
    image_path: &Path,
    image: &image::RgbImage,
    result: &InferenceResult,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let file_name = image_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image.png".to_string());
    let scene = CocoScene {
        id: 0,
        file_name,
        width: image.width() as usize,
        height: image.height() as usize,
        polygons: result.polygons.clone(),
    };
    write_annotations(&out.join("polygons.json"), &[scene])?;

    let stats = serde_json::json!({
        "patches": result.patches,
        "totals": {
            "patches": result.patches.len(),
            "failed": result.patches.iter().filter(|p| p.failed).count(),
            "truncated": result.patches.iter().filter(|p| p.truncated).count(),
            "stray_specials": result.patches.iter().map(|p| p.stray_specials).sum::<usize>(),
            "dangling_coordinates":
                result.patches.iter().map(|p| p.dangling_coordinates).sum::<usize>(),
            "dropped_cycles": result.patches.iter().map(|p| p.dropped_cycles).sum::<usize>(),
            "rings": result.patches.iter().map(|p| p.rings).sum::<usize>(),
        },
    });
    std::fs::write(out.join("stats.json"), serde_json::to_vec_pretty(&stats)?)?;
    Ok(())
}
