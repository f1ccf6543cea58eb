//! End-to-end plumbing: the training loop, single and patched inference,
//! the raster-based polygon union and batch evaluation.

mod config;
mod evaluate;
mod infer;
mod train;

pub use config::TrainConfig;
pub use evaluate::{
    evaluate_datasets, load_polygon_scenes, write_reports, AggregateMetrics, EvaluationSummary,
    SceneReport,
};
pub use infer::{infer, infer_patched, merge_union, predict_single, InferenceResult, PatchReport};
pub use train::{
    load_model, teacher_forced_accuracy, train, train_on_samples, LoadedModel, TrainOutcome,
};
