//! Pairing of predicted and ground-truth polygon instances.

use crate::graph::{Polygon, PolygonRing, PolygonSet};
use crate::metrics::{fill_rings, MaskOverlap};

/// Result of instance matching: index pairs into the two sets, plus the
/// leftovers on each side.
#[derive(Debug, Clone, Default)]
pub struct InstanceMatching {
    /// (pred index, gt index, raster IoU), in matching order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_pred: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

fn polygon_mask(p: &Polygon, width: usize, height: usize) -> crate::metrics::RasterMask {
    let rings: Vec<&PolygonRing> = p.rings().collect();
    fill_rings(&rings, width, height)
}

fn bboxes_touch(a: &Polygon, b: &Polygon) -> bool {
    let (amin, amax) = a.bbox();
    let (bmin, bmax) = b.bbox();
    amin.x <= bmax.x && bmin.x <= amax.x && amin.y <= bmax.y && bmin.y <= amax.y
}

/// Greedy one-to-one matching by rasterized IoU: candidate pairs above 0.5
/// are taken highest-IoU-first (ties broken by the smaller pred index,
/// then gt index), each instance used at most once.
pub fn match_instances(
    pred: &PolygonSet,
    gt: &PolygonSet,
    width: usize,
    height: usize,
) -> InstanceMatching {
    let pred_masks: Vec<_> = pred.polygons.iter().map(|p| polygon_mask(p, width, height)).collect();
    let gt_masks: Vec<_> = gt.polygons.iter().map(|p| polygon_mask(p, width, height)).collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.polygons.iter().enumerate() {
        for (j, g) in gt.polygons.iter().enumerate() {
            if !bboxes_touch(p, g) {
                continue;
            }
            let iou = MaskOverlap::measure(&pred_masks[i], &gt_masks[j]).iou();
            if iou > 0.5 {
                candidates.push((iou, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("IoU is finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut matching = InstanceMatching::default();
    let mut pred_used = vec![false; pred.polygons.len()];
    let mut gt_used = vec![false; gt.polygons.len()];
    for (iou, i, j) in candidates {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            matching.pairs.push((i, j, iou));
        }
    }
    matching.unmatched_pred = (0..pred_used.len()).filter(|&i| !pred_used[i]).collect();
    matching.unmatched_gt = (0..gt_used.len()).filter(|&j| !gt_used[j]).collect();
    matching
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64) -> PolygonRing {
        PolygonRing::from_xy(&[
            (x0, y0),
            (x0 + side, y0),
            (x0 + side, y0 + side),
            (x0, y0 + side),
        ])
        .unwrap()
    }

    #[test]
    fn overlapping_instances_pair_up() {
        let pred = PolygonSet::from_shells(vec![square(2.0, 2.0, 8.0), square(30.0, 30.0, 6.0)]);
        let gt = PolygonSet::from_shells(vec![square(3.0, 2.0, 8.0), square(50.0, 10.0, 6.0)]);
        let m = match_instances(&pred, &gt, 64, 64);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!((m.pairs[0].0, m.pairs[0].1), (0, 0));
        assert_eq!(m.unmatched_pred, vec![1]);
        assert_eq!(m.unmatched_gt, vec![1]);
    }

    #[test]
    fn best_overlap_wins_when_competing() {
        // One GT square; two predictions overlap it, the closer one first.
        let pred = PolygonSet::from_shells(vec![square(4.0, 2.0, 8.0), square(2.0, 2.0, 8.0)]);
        let gt = PolygonSet::from_shells(vec![square(2.0, 2.0, 8.0)]);
        let m = match_instances(&pred, &gt, 32, 32);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].0, 1, "the exact-overlap prediction should win");
        assert_eq!(m.unmatched_pred, vec![0]);
    }

    #[test]
    fn weak_overlap_stays_unmatched() {
        let pred = PolygonSet::from_shells(vec![square(0.0, 0.0, 4.0)]);
        let gt = PolygonSet::from_shells(vec![square(3.0, 0.0, 4.0)]);
        let m = match_instances(&pred, &gt, 16, 16);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_pred, vec![0]);
        assert_eq!(m.unmatched_gt, vec![0]);
    }
}
