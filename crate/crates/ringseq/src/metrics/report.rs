//! Scene-level evaluation report combining every polygon-quality metric.

use serde::{Deserialize, Serialize};

use crate::graph::PolygonSet;
use crate::metrics::{
    match_instances, mta, polis, rasterize, trace_outlines, MaskOverlap, RasterMask,
};

/// Total thickness of the boundary band used by the topology metrics, in
/// pixels: the 1-px traced outline grown by 2 px on each side.
pub const BOUNDARY_BAND_PX: f64 = 5.0;

/// Complexity-aware IoU and predicted/ground-truth vertex-count ratio.
///
/// `n_ratio = N_pred / N_gt`; `c_iou = iou · (1 − |N_pred − N_gt| /
/// (N_pred + N_gt))`. `c_iou` is absent when both sets have no vertices,
/// `n_ratio` additionally when the ground truth has none.
pub fn c_iou_and_nratio(
    pred: &PolygonSet,
    gt: &PolygonSet,
    pred_mask: &RasterMask,
    gt_mask: &RasterMask,
) -> (Option<f64>, Option<f64>) {
    let np = pred.total_vertex_count() as f64;
    let ng = gt.total_vertex_count() as f64;
    if np + ng == 0.0 {
        return (None, None);
    }
    let (iou, _) = super::raster_iou(pred_mask, gt_mask);
    let c_iou = iou * (((np + ng) - (np - ng).abs()) / (np + ng));
    let n_ratio = (ng > 0.0).then(|| np / ng);
    (Some(c_iou), n_ratio)
}

fn boundary_band(polys: &PolygonSet, width: usize, height: usize, band_px: f64) -> RasterMask {
    trace_outlines(polys.all_rings(), width, height).dilated((band_px - 1.0) / 2.0)
}

/// Filled-mask and boundary-band agreement metrics with an explicit band
/// thickness: `(iou_topo, f1_topo, pa_topo, iou_mask, f1_mask, pa_mask)`.
pub fn topo_mask_metrics_with_band(
    pred: &PolygonSet,
    gt: &PolygonSet,
    width: usize,
    height: usize,
    band_px: f64,
) -> (f64, f64, f64, f64, f64, f64) {
    let mask =
        MaskOverlap::measure(&rasterize(pred, width, height), &rasterize(gt, width, height));
    let topo = MaskOverlap::measure(
        &boundary_band(pred, width, height, band_px),
        &boundary_band(gt, width, height, band_px),
    );
    (
        topo.iou(),
        topo.f1(),
        topo.accuracy(),
        mask.iou(),
        mask.f1(),
        mask.accuracy(),
    )
}

/// [`topo_mask_metrics_with_band`] at the default 5-px band thickness.
pub fn topo_mask_metrics(
    pred: &PolygonSet,
    gt: &PolygonSet,
    width: usize,
    height: usize,
) -> (f64, f64, f64, f64, f64, f64) {
    topo_mask_metrics_with_band(pred, gt, width, height, BOUNDARY_BAND_PX)
}

/// Every polygon-quality metric for one scene, flat for JSON/CSV output.
///
/// Fields that are undefined for a scene (no matched pairs, no vertices)
/// are `None` and serialize as `null` / an empty CSV cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub accuracy: f64,
    pub c_iou: Option<f64>,
    pub n_ratio: Option<f64>,
    pub mta_degrees: Option<f64>,
    pub polis: Option<f64>,
    pub iou_topo: f64,
    pub f1_topo: f64,
    pub pa_topo: f64,
    pub f1_mask: f64,
    pub pa_mask: f64,
    pub iou_mask: f64,
    pub matched_pairs: usize,
    pub unmatched_pred: usize,
    pub unmatched_gt: usize,
    pub mta_skipped_pairs: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "iou,accuracy,c_iou,n_ratio,mta_degrees,polis,\
         iou_topo,f1_topo,pa_topo,f1_mask,pa_mask,iou_mask,\
         matched_pairs,unmatched_pred,unmatched_gt,mta_skipped_pairs";

    /// One CSV row matching [`Self::CSV_HEADER`]; absent values are empty
    /// cells.
    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iou,
            self.accuracy,
            opt(self.c_iou),
            opt(self.n_ratio),
            opt(self.mta_degrees),
            opt(self.polis),
            self.iou_topo,
            self.f1_topo,
            self.pa_topo,
            self.f1_mask,
            self.pa_mask,
            self.iou_mask,
            self.matched_pairs,
            self.unmatched_pred,
            self.unmatched_gt,
            self.mta_skipped_pairs,
        )
    }
}

/// Computes the full [`MetricsReport`] for one predicted/ground-truth
/// scene pair at the given raster resolution.
pub fn evaluate_scene(
    pred: &PolygonSet,
    gt: &PolygonSet,
    width: usize,
    height: usize,
) -> MetricsReport {
    let pred_mask = rasterize(pred, width, height);
    let gt_mask = rasterize(gt, width, height);
    let (iou, accuracy) = super::raster_iou(&pred_mask, &gt_mask);
    let (c_iou, n_ratio) = c_iou_and_nratio(pred, gt, &pred_mask, &gt_mask);
    let matching = match_instances(pred, gt, width, height);
    let mta_out = mta(pred, gt, width, height);
    let (iou_topo, f1_topo, pa_topo, iou_mask, f1_mask, pa_mask) =
        topo_mask_metrics(pred, gt, width, height);
    MetricsReport {
        iou,
        accuracy,
        c_iou,
        n_ratio,
        mta_degrees: mta_out.degrees,
        polis: polis(pred, gt, width, height),
        iou_topo,
        f1_topo,
        pa_topo,
        f1_mask,
        pa_mask,
        iou_mask,
        matched_pairs: matching.pairs.len(),
        unmatched_pred: matching.unmatched_pred.len(),
        unmatched_gt: matching.unmatched_gt.len(),
        mta_skipped_pairs: mta_out.skipped_pairs,
    }
}
