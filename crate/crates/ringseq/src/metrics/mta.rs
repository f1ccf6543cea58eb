//! Maximum tangent-angle error between matched polygon contours.

use crate::graph::{Point, Polygon, PolygonSet};
use crate::metrics::match_instances;

/// Arc-length spacing between contour samples, in pixels.
const SAMPLE_SPACING: f64 = 0.1;

/// Absolute difference between two edge directions folded into [0, 90]
/// degrees, treating edges as undirected.
fn folded_angle_deg(a: f64, b: f64) -> f64 {
    let mut diff = (a - b).abs() % 180.0;
    if diff > 90.0 {
        diff = 180.0 - diff;
    }
    diff
}

/// Samples along every edge of every ring, placed at half-step offsets so
/// no sample coincides with a vertex (where the tangent is ambiguous).
fn contour_samples(p: &Polygon) -> Vec<(Point, f64)> {
    let mut samples = Vec::new();
    for ring in p.rings() {
        for (s, e) in ring.edges() {
            let len = s.dist(e);
            if len == 0.0 {
                continue;
            }
            let angle = (e.y - s.y).atan2(e.x - s.x).to_degrees();
            let steps = (len / SAMPLE_SPACING).ceil() as usize;
            for k in 0..steps {
                let t = (k as f64 + 0.5) / steps as f64;
                samples.push((
                    Point { x: s.x + t * (e.x - s.x), y: s.y + t * (e.y - s.y) },
                    angle,
                ));
            }
        }
    }
    samples
}

/// Direction of the boundary edge of `p` nearest to the query point
/// (degrees), or `None` for a degenerate polygon with no real edges.
fn nearest_edge_angle(p: &Polygon, query: Point) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for ring in p.rings() {
        for (s, e) in ring.edges() {
            if s.dist(e) == 0.0 {
                continue;
            }
            let d = crate::graph::point_segment_distance(query, s, e);
            if best.map_or(true, |(bd, _)| d < bd) {
                let angle = (e.y - s.y).atan2(e.x - s.x).to_degrees();
                best = Some((d, angle));
            }
        }
    }
    best.map(|(_, angle)| angle)
}

/// Worst tangent-angle disagreement over the predicted contour: each
/// sample on `pred` is compared with the nearest edge of `gt`, and the
/// maximum folded difference is returned. `None` if either polygon has a
/// degenerate contour.
pub fn mta_pair(pred: &Polygon, gt: &Polygon) -> Option<f64> {
    let samples = contour_samples(pred);
    if samples.is_empty() {
        return None;
    }
    let mut worst = 0.0_f64;
    for (point, angle) in samples {
        let gt_angle = nearest_edge_angle(gt, point)?;
        worst = worst.max(folded_angle_deg(angle, gt_angle));
    }
    Some(worst)
}

/// Summary of the scene-level metric.
#[derive(Debug, Clone, Copy, Default)]
pub struct MtaOutcome {
    /// Mean of per-pair maxima, absent when no pair produced a value.
    pub degrees: Option<f64>,
    /// Matched pairs skipped because a contour was degenerate.
    pub skipped_pairs: usize,
}

/// Mean maximum tangent-angle error over IoU-matched instances.
pub fn mta(pred: &PolygonSet, gt: &PolygonSet, width: usize, height: usize) -> MtaOutcome {
    let matching = match_instances(pred, gt, width, height);
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut skipped = 0usize;
    for &(i, j, _) in &matching.pairs {
        match mta_pair(&pred.polygons[i], &gt.polygons[j]) {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    MtaOutcome {
        degrees: (n > 0).then(|| sum / n as f64),
        skipped_pairs: skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PolygonRing;

    fn polygon(points: &[(f64, f64)]) -> Polygon {
        Polygon::new(PolygonRing::from_xy(points).unwrap())
    }

    #[test]
    fn identical_polygons_have_zero_error() {
        let a = polygon(&[(2.0, 2.0), (9.0, 2.0), (9.0, 7.0), (2.0, 7.0)]);
        assert_eq!(mta_pair(&a, &a), Some(0.0));
    }

    #[test]
    fn rotated_square_errs_by_forty_five_degrees() {
        // Axis-aligned square vs the same square rotated 45 degrees about
        // its center: every tangent pair differs by 45 degrees mod 90.
        let side = 4.0;
        let c = 8.0;
        let h = side / 2.0;
        let axis = polygon(&[(c - h, c - h), (c + h, c - h), (c + h, c + h), (c - h, c + h)]);
        let r = h * 2f64.sqrt();
        let rotated = polygon(&[(c, c - r), (c + r, c), (c, c + r), (c - r, c)]);
        let value = mta_pair(&axis, &rotated).unwrap();
        assert!((value - 45.0).abs() < 1e-9, "got {value}");
    }

    #[test]
    fn reversing_ring_orientation_changes_nothing() {
        let a = polygon(&[(2.0, 2.0), (9.0, 2.0), (9.0, 7.0), (2.0, 7.0)]);
        let b = polygon(&[(2.5, 2.5), (8.5, 2.0), (9.0, 6.5), (2.0, 7.5)]);
        let reversed = {
            let mut pts: Vec<(f64, f64)> =
                b.shell.vertices().iter().map(|p| (p.x, p.y)).collect();
            pts.reverse();
            polygon(&pts)
        };
        let forward = mta_pair(&a, &b).unwrap();
        let backward = mta_pair(&a, &reversed).unwrap();
        assert!((forward - backward).abs() < 1e-12);
    }

    #[test]
    fn scene_level_averages_matched_pairs() {
        // Two matched pairs: one exact copy (0 degrees) and one axis
        // square against its 45-degree rotation (45 degrees exactly, since
        // every diamond edge folds to 45 against an axis edge). The scene
        // value is their mean.
        let axis = |c: f64, h: f64| {
            polygon(&[(c - h, c - h), (c + h, c - h), (c + h, c + h), (c - h, c + h)])
        };
        let r = 4.0 * 2f64.sqrt();
        let diamond = polygon(&[(20.0, 20.0 - r), (20.0 + r, 20.0), (20.0, 20.0 + r), (20.0 - r, 20.0)]);
        let pred = PolygonSet::new(vec![axis(44.0, 5.0), axis(20.0, 4.0)]);
        let gt = PolygonSet::new(vec![axis(44.0, 5.0), diamond]);
        let out = mta(&pred, &gt, 64, 64);
        let degrees = out.degrees.unwrap();
        assert!((degrees - 22.5).abs() < 1e-9, "got {degrees}");
        assert_eq!(out.skipped_pairs, 0);

        let empty = mta(&PolygonSet::default(), &gt, 64, 64);
        assert_eq!(empty.degrees, None);
        assert_eq!(empty.skipped_pairs, 0);
    }
}
