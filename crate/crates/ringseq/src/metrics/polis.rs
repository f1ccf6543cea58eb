//! Symmetric vertex-to-boundary distance between matched polygons.

use crate::graph::{Polygon, PolygonSet};
use crate::metrics::match_instances;

/// Average distance from each polygon's vertices to the other polygon's
/// boundary, each direction normalized by twice its own vertex count.
pub fn polis_pair(a: &Polygon, b: &Polygon) -> f64 {
    let direction = |from: &Polygon, to: &Polygon| -> f64 {
        let q = from.vertex_count();
        let sum: f64 = from
            .rings()
            .flat_map(|r| r.vertices().iter())
            .map(|&v| to.boundary_distance(v))
            .sum();
        sum / (2.0 * q as f64)
    };
    direction(a, b) + direction(b, a)
}

/// Mean pair distance over instances matched by IoU greater than 0.5, or
/// `None` when nothing matched.
pub fn polis(pred: &PolygonSet, gt: &PolygonSet, width: usize, height: usize) -> Option<f64> {
    let matching = match_instances(pred, gt, width, height);
    if matching.pairs.is_empty() {
        return None;
    }
    let sum: f64 = matching
        .pairs
        .iter()
        .map(|&(i, j, _)| polis_pair(&pred.polygons[i], &gt.polygons[j]))
        .sum();
    Some(sum / matching.pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PolygonRing;

    fn polygon(points: &[(f64, f64)]) -> Polygon {
        Polygon::new(PolygonRing::from_xy(points).unwrap())
    }

    fn unit_square(x0: f64, y0: f64) -> Polygon {
        polygon(&[(x0, y0), (x0 + 1.0, y0), (x0 + 1.0, y0 + 1.0), (x0, y0 + 1.0)])
    }

    #[test]
    fn identical_polygons_have_zero_distance() {
        let a = unit_square(1.0, 1.0);
        assert_eq!(polis_pair(&a, &a), 0.0);
    }

    #[test]
    fn small_shift_gives_the_analytic_value() {
        // Shift by 0.1 in x: two vertices per square are 0.1 away from the
        // other boundary, the rest lie on it. Each direction contributes
        // 0.2 / 8 = 0.025.
        let a = unit_square(0.0, 0.0);
        let b = unit_square(0.1, 0.0);
        assert!((polis_pair(&a, &b) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn pair_distance_is_symmetric() {
        let a = polygon(&[(0.0, 0.0), (5.0, 0.0), (5.0, 3.0), (2.0, 3.0), (2.0, 5.0), (0.0, 5.0)]);
        let b = polygon(&[(0.5, 0.2), (5.2, 0.0), (5.0, 3.1), (0.1, 4.8)]);
        assert_eq!(polis_pair(&a, &b), polis_pair(&b, &a));
    }

    #[test]
    fn matches_a_dense_sampling_oracle() {
        // Independent oracle: approximate each vertex-to-boundary distance
        // by scanning finely sampled boundary points.
        let a = polygon(&[(2.0, 2.0), (9.0, 2.0), (9.0, 7.0), (2.0, 7.0)]);
        let b = polygon(&[(2.5, 1.5), (9.5, 2.5), (8.5, 7.5), (1.5, 6.5)]);

        let sample_boundary = |p: &Polygon| -> Vec<(f64, f64)> {
            let mut pts = Vec::new();
            for ring in p.rings() {
                for (s, e) in ring.edges() {
                    let len = s.dist(e);
                    let steps = (len / 1e-3).ceil() as usize;
                    for k in 0..steps {
                        let t = k as f64 / steps as f64;
                        pts.push((s.x + t * (e.x - s.x), s.y + t * (e.y - s.y)));
                    }
                }
            }
            pts
        };
        let oracle = |from: &Polygon, to: &Polygon| -> f64 {
            let boundary = sample_boundary(to);
            let sum: f64 = from
                .rings()
                .flat_map(|r| r.vertices().iter())
                .map(|v| {
                    boundary
                        .iter()
                        .map(|&(x, y)| ((v.x - x).powi(2) + (v.y - y).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            sum / (2.0 * from.vertex_count() as f64)
        };

        let expected = oracle(&a, &b) + oracle(&b, &a);
        assert!((polis_pair(&a, &b) - expected).abs() < 1e-3);
    }

    #[test]
    fn scene_level_distance_averages_matched_pairs_only() {
        let pred = PolygonSet::new(vec![
            polygon(&[(2.0, 2.0), (10.0, 2.0), (10.0, 10.0), (2.0, 10.0)]),
            polygon(&[(40.0, 40.0), (44.0, 40.0), (44.0, 44.0), (40.0, 44.0)]),
        ]);
        let gt = PolygonSet::new(vec![polygon(&[
            (2.5, 2.0),
            (10.5, 2.0),
            (10.5, 10.0),
            (2.5, 10.0),
        ])]);
        let value = polis(&pred, &gt, 64, 64).unwrap();
        let direct = polis_pair(&pred.polygons[0], &gt.polygons[0]);
        assert_eq!(value, direct);
        assert_eq!(polis(&PolygonSet::default(), &gt, 64, 64), None);
    }
}
