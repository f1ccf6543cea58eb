//! Batch evaluation: per-scene polygon metrics, dataset aggregates and
//! the JSON/CSV report files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{read_annotations, CocoScene, CocoWarnings};
use crate::metrics::{evaluate_scene, rasterize, MaskOverlap, MetricsReport};
use crate::Result;

/// One evaluated scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub scene_id: u64,
    pub metrics: MetricsReport,
}

/// Dataset-level aggregates. The `Option` metrics are means over the
/// scenes where the metric is defined; the pooled values accumulate raw
/// counts across scenes before dividing, so large scenes weigh more.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub scenes: usize,
    pub iou: Option<f64>,
    pub accuracy: Option<f64>,
    pub c_iou: Option<f64>,
    pub n_ratio: Option<f64>,
    pub mta_degrees: Option<f64>,
    pub polis: Option<f64>,
    pub iou_topo: Option<f64>,
    pub f1_topo: Option<f64>,
    pub pa_topo: Option<f64>,
    pub f1_mask: Option<f64>,
    pub pa_mask: Option<f64>,
    pub iou_mask: Option<f64>,
    /// Intersection and union pixels pooled over all scenes.
    pub iou_pooled: Option<f64>,
    /// Total predicted vertices over total ground-truth vertices.
    pub n_ratio_pooled: Option<f64>,
    pub matched_pairs: usize,
    pub unmatched_pred: usize,
    pub unmatched_gt: usize,
    pub mta_skipped_pairs: usize,
}

/// Everything an evaluation run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub scenes: Vec<SceneReport>,
    /// Predicted scene ids with no ground-truth counterpart, skipped.
    pub skipped_pred_ids: Vec<u64>,
    /// Ground-truth scene ids with no prediction, skipped.
    pub skipped_gt_ids: Vec<u64>,
    pub aggregate: AggregateMetrics,
}

/// Raw per-scene counts that feed the pooled aggregates.
struct PooledCounts {
    intersection: usize,
    union: usize,
    pred_vertices: usize,
    gt_vertices: usize,
}

fn mean_of<F: Fn(&MetricsReport) -> f64>(scenes: &[SceneReport], f: F) -> Option<f64> {
    if scenes.is_empty() {
        return None;
    }
    Some(scenes.iter().map(|s| f(&s.metrics)).sum::<f64>() / scenes.len() as f64)
}

fn mean_opt<F: Fn(&MetricsReport) -> Option<f64>>(scenes: &[SceneReport], f: F) -> Option<f64> {
    let values: Vec<f64> = scenes.iter().filter_map(|s| f(&s.metrics)).collect();
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

fn aggregate(scenes: &[SceneReport], pooled: &[PooledCounts]) -> AggregateMetrics {
    let intersection: usize = pooled.iter().map(|p| p.intersection).sum();
    let union: usize = pooled.iter().map(|p| p.union).sum();
    let pred_vertices: usize = pooled.iter().map(|p| p.pred_vertices).sum();
    let gt_vertices: usize = pooled.iter().map(|p| p.gt_vertices).sum();
    AggregateMetrics {
        scenes: scenes.len(),
        iou: mean_of(scenes, |m| m.iou),
        accuracy: mean_of(scenes, |m| m.accuracy),
        c_iou: mean_opt(scenes, |m| m.c_iou),
        n_ratio: mean_opt(scenes, |m| m.n_ratio),
        mta_degrees: mean_opt(scenes, |m| m.mta_degrees),
        polis: mean_opt(scenes, |m| m.polis),
        iou_topo: mean_of(scenes, |m| m.iou_topo),
        f1_topo: mean_of(scenes, |m| m.f1_topo),
        pa_topo: mean_of(scenes, |m| m.pa_topo),
        f1_mask: mean_of(scenes, |m| m.f1_mask),
        pa_mask: mean_of(scenes, |m| m.pa_mask),
        iou_mask: mean_of(scenes, |m| m.iou_mask),
        iou_pooled: if scenes.is_empty() {
            None
        } else if union == 0 {
            Some(1.0)
        } else {
            Some(intersection as f64 / union as f64)
        },
        n_ratio_pooled: (gt_vertices > 0).then(|| pred_vertices as f64 / gt_vertices as f64),
        matched_pairs: scenes.iter().map(|s| s.metrics.matched_pairs).sum(),
        unmatched_pred: scenes.iter().map(|s| s.metrics.unmatched_pred).sum(),
        unmatched_gt: scenes.iter().map(|s| s.metrics.unmatched_gt).sum(),
        mta_skipped_pairs: scenes.iter().map(|s| s.metrics.mta_skipped_pairs).sum(),
    }
}

/// Evaluates predicted scenes against ground truth, paired by scene id.
/// Ids present on only one side are listed and skipped. Each pair is
/// rasterized at the ground-truth scene's dimensions.
pub fn evaluate_datasets(pred: &[CocoScene], gt: &[CocoScene]) -> EvaluationSummary {
    let gt_index: std::collections::BTreeMap<u64, &CocoScene> =
        gt.iter().map(|s| (s.id, s)).collect();
    let pred_ids: std::collections::BTreeSet<u64> = pred.iter().map(|s| s.id).collect();

    let skipped_pred_ids: Vec<u64> =
        pred.iter().map(|s| s.id).filter(|id| !gt_index.contains_key(id)).collect();
    let skipped_gt_ids: Vec<u64> =
        gt.iter().map(|s| s.id).filter(|id| !pred_ids.contains(id)).collect();

    let pairs: Vec<(&CocoScene, &CocoScene)> = pred
        .iter()
        .filter_map(|p| gt_index.get(&p.id).map(|g| (p, *g)))
        .collect();

    let evaluated: Vec<(SceneReport, PooledCounts)> = pairs
        .par_iter()
        .map(|&(p, g)| {
            let (width, height) = (g.width, g.height);
            let metrics = evaluate_scene(&p.polygons, &g.polygons, width, height);
            let overlap = MaskOverlap::measure(
                &rasterize(&p.polygons, width, height),
                &rasterize(&g.polygons, width, height),
            );
            (
                SceneReport { scene_id: p.id, metrics },
                PooledCounts {
                    intersection: overlap.intersection,
                    union: overlap.union,
                    pred_vertices: p.polygons.total_vertex_count(),
                    gt_vertices: g.polygons.total_vertex_count(),
                },
            )
        })
        .collect();

    let (scenes, pooled): (Vec<SceneReport>, Vec<PooledCounts>) = evaluated.into_iter().unzip();
    let aggregate = aggregate(&scenes, &pooled);
    EvaluationSummary {
        scenes,
        skipped_pred_ids,
        skipped_gt_ids,
        aggregate,
    }
}

/// Reads polygons from an annotation file, or from `annotations.json`
/// inside a dataset directory.
pub fn load_polygon_scenes(path: &Path) -> Result<(Vec<CocoScene>, CocoWarnings)> {
    let file = if path.is_dir() { path.join("annotations.json") } else { path.to_path_buf() };
    read_annotations(&file)
}

/// Writes `metrics.json` (the full summary) and `metrics.csv` (one row
/// per scene) into `dir`, returning both paths.
pub fn write_reports(dir: &Path, summary: &EvaluationSummary) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let json_path = dir.join("metrics.json");
    std::fs::write(&json_path, serde_json::to_vec_pretty(summary)?)?;

    let mut csv = format!("scene_id,{}\n", MetricsReport::CSV_HEADER);
    for scene in &summary.scenes {
        csv.push_str(&format!("{},{}\n", scene.scene_id, scene.metrics.csv_row()));
    }
    let csv_path = dir.join("metrics.csv");
    std::fs::write(&csv_path, csv)?;
    Ok((json_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_scene, Preset};
    use crate::graph::{Polygon, PolygonRing, PolygonSet};

    fn coco(id: u64, size: usize, polygons: PolygonSet) -> CocoScene {
        CocoScene {
            id,
            file_name: format!("images/scene_{id:08}.png"),
            width: size,
            height: size,
            polygons,
        }
    }

    fn generated(ids: &[u64]) -> Vec<CocoScene> {
        ids.iter()
            .map(|&id| {
                let (sample, _) = generate_scene(id, &Preset::tiny());
                coco(id, 64, sample.geometry.polygons().unwrap().clone())
            })
            .collect()
    }

    #[test]
    fn ground_truth_against_itself_is_perfect() {
        let gt = generated(&[0, 1, 2]);
        let summary = evaluate_datasets(&gt, &gt);
        assert_eq!(summary.scenes.len(), 3);
        for scene in &summary.scenes {
            assert_eq!(scene.metrics.iou, 1.0);
            assert_eq!(scene.metrics.polis, Some(0.0));
            assert_eq!(scene.metrics.mta_degrees, Some(0.0));
            assert_eq!(scene.metrics.n_ratio, Some(1.0));
            assert_eq!(scene.metrics.unmatched_pred, 0);
        }
        assert_eq!(summary.aggregate.iou, Some(1.0));
        assert_eq!(summary.aggregate.iou_pooled, Some(1.0));
        assert_eq!(summary.aggregate.n_ratio_pooled, Some(1.0));
    }

    #[test]
    fn empty_predictions_score_zero() {
        let gt = generated(&[4]);
        let pred = vec![coco(4, 64, PolygonSet::default())];
        let summary = evaluate_datasets(&pred, &gt);
        assert_eq!(summary.scenes[0].metrics.iou, 0.0);
        assert_eq!(summary.scenes[0].metrics.matched_pairs, 0);
        assert_eq!(summary.aggregate.iou_pooled, Some(0.0));
        assert_eq!(summary.aggregate.n_ratio_pooled, Some(0.0));
    }

    #[test]
    fn mismatched_ids_are_listed_and_skipped() {
        let gt = generated(&[0, 1, 2]);
        let mut pred = generated(&[0, 1]);
        pred.push(coco(5, 64, PolygonSet::default()));
        let summary = evaluate_datasets(&pred, &gt);
        assert_eq!(summary.skipped_pred_ids, vec![5]);
        assert_eq!(summary.skipped_gt_ids, vec![2]);
        let ids: Vec<u64> = summary.scenes.iter().map(|s| s.scene_id).collect();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn pooled_iou_weights_scenes_by_pixel_counts() {
        let square = |x0: f64, side: f64| {
            PolygonSet::new(vec![Polygon::new(
                PolygonRing::from_xy(&[
                    (x0, 10.0),
                    (x0 + side, 10.0),
                    (x0 + side, 10.0 + side),
                    (x0, 10.0 + side),
                ])
                .unwrap(),
            )])
        };
        // Scene 0: perfect 30x30 match. Scene 1: empty prediction vs 10x10.
        let gt = vec![coco(0, 64, square(5.0, 30.0)), coco(1, 64, square(5.0, 10.0))];
        let pred = vec![coco(0, 64, square(5.0, 30.0)), coco(1, 64, PolygonSet::default())];
        let summary = evaluate_datasets(&pred, &gt);
        assert_eq!(summary.aggregate.iou, Some(0.5));
        let expected = 900.0 / (900.0 + 100.0);
        assert!((summary.aggregate.iou_pooled.unwrap() - expected).abs() < 1e-12);
        assert_eq!(summary.aggregate.n_ratio_pooled, Some(0.5));
    }

    #[test]
    fn reports_round_trip_through_disk() {
        let gt = generated(&[7, 8]);
        let summary = evaluate_datasets(&gt, &gt);
        let dir = tempfile::tempdir().unwrap();
        let (json_path, csv_path) = write_reports(dir.path(), &summary).unwrap();

        let back: EvaluationSummary =
            serde_json::from_slice(&std::fs::read(json_path).unwrap()).unwrap();
        assert_eq!(back, summary);

        let csv = std::fs::read_to_string(csv_path).unwrap();
        assert_eq!(csv.lines().count(), 3);
        let columns = MetricsReport::CSV_HEADER.split(',').count() + 1;
        for line in csv.lines() {
            assert_eq!(line.split(',').count(), columns);
        }
    }
}
