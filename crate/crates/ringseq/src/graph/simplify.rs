//! Douglas-Peucker simplification for polylines and closed rings.

use crate::graph::ring::{point_segment_distance, Point, PolygonRing};

/// Simplifies an open polyline, always keeping both endpoints. Interior
/// vertices further than `epsilon` from the chord are kept recursively.
pub fn douglas_peucker_polyline(points: &[Point], epsilon: f64) -> Vec<Point> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let (first, last) = (points[0], points[points.len() - 1]);
    let mut max_dist = -1.0;
    let mut max_idx = 0;
    for (i, &p) in points.iter().enumerate().skip(1).take(points.len() - 2) {
        let d = point_segment_distance(p, first, last);
        if d > max_dist {
            max_dist = d;
            max_idx = i;
        }
    }
    if max_dist <= epsilon {
        return vec![first, last];
    }
    let mut left = douglas_peucker_polyline(&points[..=max_idx], epsilon);
    let right = douglas_peucker_polyline(&points[max_idx..], epsilon);
    left.pop(); // the split point starts `right`
    left.extend(right);
    left
}

/// Simplifies a closed ring. The ring is split at its two mutually farthest
/// vertices so both chains have stable anchors, each chain is simplified as
/// a polyline, and the halves are rejoined. Returns `None` when the result
/// degenerates below three vertices.
pub fn douglas_peucker_ring(ring: &PolygonRing, epsilon: f64) -> Option<PolygonRing> {
    let pts = ring.vertices();
    let n = pts.len();
    if n == 3 {
        return Some(ring.clone());
    }
    let (mut ai, mut bi, mut best) = (0, 1, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = pts[i].dist(pts[j]);
            if d > best {
                best = d;
                ai = i;
                bi = j;
            }
        }
    }
    // Chain 1: ai..=bi; chain 2: bi..=ai wrapping around.
    let chain1: Vec<Point> = (ai..=bi).map(|i| pts[i]).collect();
    let chain2: Vec<Point> = (bi..n).chain(0..=ai).map(|i| pts[i]).collect();
    let mut s1 = douglas_peucker_polyline(&chain1, epsilon);
    let s2 = douglas_peucker_polyline(&chain2, epsilon);
    s1.pop(); // endpoint shared with s2's start
    s1.extend_from_slice(&s2[..s2.len() - 1]); // s2's end wraps onto s1's start
    PolygonRing::new(s1).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64;

    #[test]
    fn collinear_interior_points_are_removed() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.001),
            Point::new(2.0, -0.001),
            Point::new(3.0, 0.0),
        ];
        let out = douglas_peucker_polyline(&pts, 0.01);
        assert_eq!(out, vec![pts[0], pts[3]]);
    }

    #[test]
    fn corners_above_epsilon_survive() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 0.0),
        ];
        let out = douglas_peucker_polyline(&pts, 0.5);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn ring_with_jittered_edges_simplifies_to_rectangle() {
        // A 10 x 6 rectangle with a midpoint nudged by 0.2 on every edge.
        let ring = PolygonRing::from_xy(&[
            (0.0, 0.0),
            (5.0, 0.2),
            (10.0, 0.0),
            (9.8, 3.0),
            (10.0, 6.0),
            (5.0, 5.8),
            (0.0, 6.0),
            (0.2, 3.0),
        ])
        .unwrap();
        let out = douglas_peucker_ring(&ring, 0.5).unwrap();
        assert_eq!(out.len(), 4);
    }

    /// Every original vertex must stay within epsilon of the simplified
    /// boundary, and every simplified vertex is an original vertex, so the
    /// symmetric (Hausdorff) distance is bounded by epsilon.
    #[test]
    fn hausdorff_distance_is_bounded_by_epsilon() {
        let mut rng = Pcg64::seed_from_u64(97);
        for _ in 0..50 {
            let n = rng.random_range(6..24);
            let pts: Vec<Point> = (0..n)
                .map(|i| {
                    let angle = i as f64 / n as f64 * std::f64::consts::TAU;
                    let radius = rng.random_range(5.0..10.0);
                    Point::new(radius * angle.cos(), radius * angle.sin())
                })
                .collect();
            let Ok(ring) = PolygonRing::new(pts) else { continue };
            let eps = rng.random_range(0.1..2.0);
            let Some(simple) = douglas_peucker_ring(&ring, eps) else { continue };
            // Dense samples of the original boundary vs the simplified one.
            for (a, b) in ring.edges() {
                for k in 0..=20 {
                    let t = k as f64 / 20.0;
                    let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
                    let d = simple.boundary_distance(p);
                    assert!(d <= eps + 1e-9, "sample {:?} is {} > {} away", p, d, eps);
                }
            }
        }
    }
}
