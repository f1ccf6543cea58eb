//! The training loop: teacher-forced sequence loss plus soft-assignment
//! permutation loss, averaged over a batch and stepped with AdamW.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;

use crate::data::{augment, derive_scene_seed, load_dataset, splitmix64, Preset, SceneSample};
use crate::matching::sinkhorn_normalize;
use crate::model::{detection_loss, permutation_loss, total_loss, Model, ModelConfig};
use crate::pipeline::TrainConfig;
use crate::tensor::{load_checkpoint, save_checkpoint, AdamW, Tape};
use crate::{Error, Result};

/// Distinct PRNG purposes derived from the one training seed.
const BATCH_STREAM: u64 = 0x42_41_54_43_48; // "BATCH"
const AUGMENT_STREAM: u64 = 0x41_55_47; // "AUG"

/// Consecutive non-finite steps tolerated before the run aborts.
const MAX_CONSECUTIVE_SKIPS: usize = 10;

/// Summary of a finished training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Optimizer steps actually applied.
    pub steps_taken: usize,
    /// Steps dropped because a loss or gradient went non-finite.
    pub skipped_steps: usize,
    /// Teacher-forced token accuracy over the unaugmented training set at
    /// the final probe.
    pub final_accuracy: f64,
    pub checkpoint_path: PathBuf,
    pub curve_path: PathBuf,
}

/// One sample's contribution to a batch.
struct SampleStep {
    grads: Vec<Vec<f64>>,
    total: f64,
    detection: f64,
    permutation: f64,
    correct_tokens: usize,
    token_positions: usize,
}

/// Forward, loss and backward for one (augmented) scene.
fn sample_step(model: &Model, sample: &SceneSample, config: &TrainConfig) -> Result<SampleStep> {
    let mut tape = Tape::new();
    let staged = model.stage(&mut tape, true);
    let z = model.encode(&mut tape, &staged, &sample.model_input())?;
    let out = model.decode_teacher_forced(&mut tape, &staged, z, sample.sequence.tokens())?;
    let targets = sample.sequence.targets();
    let det = detection_loss(&mut tape, out.logits, targets)?;
    let vertex_feats = model.vertex_features(&mut tape, out.features)?;
    let scores = model.matching_scores(&mut tape, &staged, vertex_feats)?;
    let soft = sinkhorn_normalize(
        &mut tape,
        scores.s,
        config.sinkhorn_iterations,
        config.temperature,
    )?;
    let perm = permutation_loss(&mut tape, soft.entries, &sample.permutation)?;
    let total = total_loss(&mut tape, det, perm, config.loss_weights())?;
    tape.backward(total)?;

    let classes = model.config().vocab_size();
    let logits = tape.value(out.logits);
    let correct_tokens = count_correct(logits, classes, targets);
    Ok(SampleStep {
        grads: model.collect_grads(&tape, &staged),
        total: tape.to_scalar(total)?,
        detection: tape.to_scalar(det)?,
        permutation: tape.to_scalar(perm)?,
        correct_tokens,
        token_positions: targets.len(),
    })
}

fn count_correct(logits: &[f64], classes: usize, targets: &[usize]) -> usize {
    targets
        .iter()
        .enumerate()
        .filter(|&(row, &target)| {
            let row_logits = &logits[row * classes..(row + 1) * classes];
            let best = row_logits
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.partial_cmp(b).expect("finite logits"))
                .map(|(i, _)| i);
            best == Some(target)
        })
        .count()
}

/// Teacher-forced next-token accuracy over unaugmented scenes.
pub fn teacher_forced_accuracy(model: &Model, samples: &[SceneSample]) -> Result<f64> {
    let counts: Result<Vec<(usize, usize)>> = samples
        .par_iter()
        .map(|sample| {
            let mut tape = Tape::new();
            let staged = model.stage(&mut tape, false);
            let z = model.encode(&mut tape, &staged, &sample.model_input())?;
            let out =
                model.decode_teacher_forced(&mut tape, &staged, z, sample.sequence.tokens())?;
            let targets = sample.sequence.targets();
            let correct =
                count_correct(tape.value(out.logits), model.config().vocab_size(), targets);
            Ok((correct, targets.len()))
        })
        .collect();
    let counts = counts?;
    let correct: usize = counts.iter().map(|&(c, _)| c).sum();
    let total: usize = counts.iter().map(|&(_, t)| t).sum();
    if total == 0 {
        return Err(Error::Dataset("no token positions to score".to_string()));
    }
    Ok(correct as f64 / total as f64)
}

/// Batch-mean losses and token-accuracy counts.
struct BatchStats {
    total: f64,
    detection: f64,
    permutation: f64,
    correct_tokens: usize,
    token_positions: usize,
}

/// Rescales gradients in place so their global L2 norm is at most `clip`.
/// A non-positive `clip` disables the rescale; non-finite gradients pass
/// through untouched for the optimizer to reject.
fn clip_gradient_norm(grads: &mut [Vec<f64>], clip: f64) {
    if clip <= 0.0 {
        return;
    }
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm.is_finite() && norm > clip {
        let scale = clip / norm;
        for g in grads.iter_mut() {
            for v in g {
                *v *= scale;
            }
        }
    }
}

/// Averages per-sample gradients and losses in batch-index order, so the
/// result does not depend on worker scheduling.
fn average_grads(batch: Vec<SampleStep>) -> (Vec<Vec<f64>>, BatchStats) {
    let n = batch.len() as f64;
    let stats = BatchStats {
        total: batch.iter().map(|s| s.total).sum::<f64>() / n,
        detection: batch.iter().map(|s| s.detection).sum::<f64>() / n,
        permutation: batch.iter().map(|s| s.permutation).sum::<f64>() / n,
        correct_tokens: batch.iter().map(|s| s.correct_tokens).sum(),
        token_positions: batch.iter().map(|s| s.token_positions).sum(),
    };
    let mut steps = batch.into_iter();
    let mut grads = steps.next().expect("batches are non-empty").grads;
    for step in steps {
        for (acc, g) in grads.iter_mut().zip(&step.grads) {
            for (a, &b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }
    for g in &mut grads {
        for v in g {
            *v /= n;
        }
    }
    (grads, stats)
}

fn checkpoint_extra(config: &TrainConfig, model_config: &ModelConfig, preset: &Preset) -> serde_json::Value {
    serde_json::json!({
        "model_config": model_config,
        "preset": preset,
        "train_config": config,
    })
}

/// Trains a freshly initialized model on a dataset directory written by
/// the generator. Writes interval checkpoints, a final `model.bin` and a
/// per-step `training_curve.csv` into `out_dir`.
pub fn train(config: &TrainConfig, data_dir: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    let preset = config.preset()?;
    let (manifest, samples, _) = load_dataset(data_dir)?;
    if manifest.preset != preset {
        return Err(Error::Config(format!(
            "dataset was generated with preset `{}` but the config says `{}`",
            manifest.preset.name, config.preset
        )));
    }
    train_on_samples(config, &samples, out_dir)
}

/// Training entry point over in-memory scenes.
pub fn train_on_samples(
    config: &TrainConfig,
    samples: &[SceneSample],
    out_dir: &Path,
) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".to_string()));
    }
    let preset = config.preset()?;
    let model_config = config.model_config(&preset)?;
    std::fs::create_dir_all(out_dir)?;

    let mut model = Model::init(model_config, config.seed)?;
    let mut optimizer = AdamW::new(config.optimizer_config(), model.store());
    let mut batch_rng = Pcg64::seed_from_u64(splitmix64(config.seed ^ BATCH_STREAM));
    let extra = checkpoint_extra(config, &model_config, &preset);

    let mut curve = String::from(
        "step,total_loss,detection_loss,permutation_loss,token_accuracy,probe_accuracy\n",
    );
    let mut steps_taken = 0;
    let mut skipped_steps = 0;
    let mut consecutive_skips = 0;
    let mut last_error = String::new();
    let mut final_accuracy = 0.0;

    for step in 0..config.max_steps {
        optimizer.config.learning_rate = config.learning_rate_at(step);
        let batch: Vec<(usize, u64)> = (0..config.batch_size)
            .map(|slot| {
                let index = batch_rng.random_range(0..samples.len());
                let augment_seed = derive_scene_seed(
                    config.seed ^ AUGMENT_STREAM,
                    (step * config.batch_size + slot) as u64,
                );
                (index, augment_seed)
            })
            .collect();

        let per_sample: Result<Vec<SampleStep>> = batch
            .par_iter()
            .map(|&(index, augment_seed)| {
                let augmented = augment(&samples[index], &preset, augment_seed)?;
                sample_step(&model, &augmented, config)
            })
            .collect();

        let applied = match per_sample {
            Ok(steps) => {
                let (mut grads, stats) = average_grads(steps);
                clip_gradient_norm(&mut grads, config.gradient_clip_norm);
                match optimizer.step(model.store_mut(), &grads) {
                    Ok(()) => Some(stats),
                    Err(Error::NonFinite { context }) => {
                        last_error = format!("non-finite values in {context}");
                        None
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::NonFinite { context }) => {
                last_error = format!("non-finite values in {context}");
                None
            }
            Err(e) => return Err(e),
        };

        let probing = (step + 1) % config.checkpoint_interval == 0 || step + 1 == config.max_steps;
        match applied {
            Some(stats) => {
                steps_taken += 1;
                consecutive_skips = 0;
                let accuracy = stats.correct_tokens as f64 / stats.token_positions as f64;
                let probe = if probing {
                    final_accuracy = teacher_forced_accuracy(&model, samples)?;
                    format!("{final_accuracy}")
                } else {
                    String::new()
                };
                writeln!(
                    curve,
                    "{},{},{},{},{},{}",
                    step + 1,
                    stats.total,
                    stats.detection,
                    stats.permutation,
                    accuracy,
                    probe
                )
                .expect("writing to a String cannot fail");
            }
            None => {
                skipped_steps += 1;
                consecutive_skips += 1;
                writeln!(curve, "{},,,,,", step + 1).expect("writing to a String cannot fail");
                if consecutive_skips >= MAX_CONSECUTIVE_SKIPS {
                    return Err(Error::Training(format!(
                        "{MAX_CONSECUTIVE_SKIPS} consecutive steps skipped, last at step {} \
                         ({last_error}); stopping before the run wastes the budget",
                        step + 1
                    )));
                }
            }
        }

        if probing {
            let path = out_dir.join(format!("checkpoint_{:06}.bin", step + 1));
            save_checkpoint(&path, model.store(), Some(&optimizer), extra.clone())?;
            if final_accuracy >= config.early_stop_token_accuracy {
                break;
            }
        }
    }

    let checkpoint_path = out_dir.join("model.bin");
    save_checkpoint(&checkpoint_path, model.store(), Some(&optimizer), extra)?;
    let curve_path = out_dir.join("training_curve.csv");
    std::fs::write(&curve_path, curve)?;
    Ok(TrainOutcome {
        steps_taken,
        skipped_steps,
        final_accuracy,
        checkpoint_path,
        curve_path,
    })
}

/// A model restored from a checkpoint, along with the scene preset it was
/// trained for.
pub struct LoadedModel {
    pub model: Model,
    pub preset: Preset,
    pub step_count: u64,
}

/// Restores the model a training run saved.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let checkpoint = load_checkpoint(path)?;
    let field = |name: &str| {
        checkpoint
            .extra
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("missing `{name}` metadata")))
    };
    let model_config: ModelConfig = serde_json::from_value(field("model_config")?)?;
    let preset: Preset = serde_json::from_value(field("preset")?)?;
    let model = Model::from_parts(model_config, checkpoint.store)?;
    Ok(LoadedModel {
        model,
        preset,
        step_count: checkpoint.step_count,
    })
}
