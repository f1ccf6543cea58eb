//! Planar geometry types in image coordinates (x right, y down).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-d point in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Whether open segments `a`-`b` and `c`-`d` cross or touch.
pub fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    fn orient(p: Point, q: Point, r: Point) -> f64 {
        (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
    }
    fn on_segment(p: Point, q: Point, r: Point) -> bool {
        q.x <= p.x.max(r.x) && q.x >= p.x.min(r.x) && q.y <= p.y.max(r.y) && q.y >= p.y.min(r.y)
    }
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(a, c, b))
        || (o2 == 0.0 && on_segment(a, d, b))
        || (o3 == 0.0 && on_segment(c, a, d))
        || (o4 == 0.0 && on_segment(c, b, d))
}

/// A simple closed ring: at least three vertices, implicitly closed, no
/// consecutive duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonRing {
    vertices: Vec<Point>,
}

impl PolygonRing {
    /// Builds a ring, dropping exact consecutive duplicates (including the
    /// wrap-around pair). Fails if fewer than three vertices remain.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let mut cleaned: Vec<Point> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if cleaned.last() != Some(&v) {
                cleaned.push(v);
            }
        }
        while cleaned.len() > 1 && cleaned.first() == cleaned.last() {
            cleaned.pop();
        }
        if cleaned.len() < 3 {
            return Err(Error::invalid(
                "ring",
                format!("{} distinct vertices, need at least 3", cleaned.len()),
            ));
        }
        Ok(Self { vertices: cleaned })
    }

    /// Convenience constructor from `(x, y)` pairs.
    pub fn from_xy(coords: &[(f64, f64)]) -> Result<Self> {
        Self::new(coords.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a constructed ring always has >= 3 vertices
    }

    /// Edges as consecutive vertex pairs, closing back to the start.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area; positive when the ring winds clockwise on screen
    /// (y axis pointing down).
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_clockwise(&self) -> bool {
        self.signed_area() > 0.0
    }

    /// Returns the ring with clockwise winding.
    pub fn clockwise(mut self) -> Self {
        if !self.is_clockwise() {
            self.vertices.reverse();
        }
        self
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    /// Index of the topmost vertex, leftmost on ties (minimal `(y, x)`).
    pub fn canonical_start(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.vertices.iter().enumerate() {
            let b = self.vertices[best];
            if (v.y, v.x) < (b.y, b.x) {
                best = i;
            }
        }
        best
    }

    /// Rotates the vertex list so that `start` comes first.
    pub fn rotated_to(&self, start: usize) -> Self {
        let mut vertices = Vec::with_capacity(self.vertices.len());
        vertices.extend_from_slice(&self.vertices[start..]);
        vertices.extend_from_slice(&self.vertices[..start]);
        Self { vertices }
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bbox(&self) -> (Point, Point) {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for v in &self.vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        (min, max)
    }

    /// Even-odd containment test. Points exactly on a left/top edge count as
    /// inside, matching the rasterizer's half-open convention.
    pub fn contains(&self, p: Point) -> bool {
        let mut crossings = 0usize;
        for (a, b) in self.edges() {
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            if lo.y <= p.y && p.y < hi.y {
                let x_at = lo.x + (p.y - lo.y) * (hi.x - lo.x) / (hi.y - lo.y);
                if x_at > p.x {
                    crossings += 1;
                }
            }
        }
        crossings % 2 == 1
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| Point::new(v.x + dx, v.y + dy))
                .collect(),
        }
    }

    /// Minimum distance from `p` to the ring boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A shell ring with zero or more hole rings fully contained in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub shell: PolygonRing,
    pub holes: Vec<PolygonRing>,
}

impl Polygon {
    pub fn new(shell: PolygonRing) -> Self {
        Self { shell, holes: Vec::new() }
    }

    /// All rings: the shell first, then holes.
    pub fn rings(&self) -> impl Iterator<Item = &PolygonRing> {
        std::iter::once(&self.shell).chain(self.holes.iter())
    }

    pub fn vertex_count(&self) -> usize {
        self.rings().map(|r| r.len()).sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            shell: self.shell.translated(dx, dy),
            holes: self.holes.iter().map(|h| h.translated(dx, dy)).collect(),
        }
    }

    /// Distance from a point to the nearest boundary edge (shell or hole).
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.rings()
            .map(|r| r.boundary_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Bounding box of the shell (holes lie inside it by construction).
    pub fn bbox(&self) -> (Point, Point) {
        self.shell.bbox()
    }
}

/// A collection of polygons (one scene's buildings).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolygonSet {
    pub polygons: Vec<Polygon>,
}

impl PolygonSet {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        Self { polygons }
    }

    pub fn from_shells(shells: Vec<PolygonRing>) -> Self {
        Self {
            polygons: shells.into_iter().map(Polygon::new).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    /// Every ring in the set: shells and holes.
    pub fn all_rings(&self) -> impl Iterator<Item = &PolygonRing> {
        self.polygons.iter().flat_map(|p| p.rings())
    }

    pub fn total_vertex_count(&self) -> usize {
        self.polygons.iter().map(|p| p.vertex_count()).sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            polygons: self.polygons.iter().map(|p| p.translated(dx, dy)).collect(),
        }
    }
}

/// A planar road network. Node ids index `nodes`; edges are unordered pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    pub nodes: Vec<Point>,
    pub edges: Vec<(usize, usize)>,
}

impl RoadGraph {
    /// Validates node indices, forbids self-loops and normalises/sorts edges.
    pub fn new(nodes: Vec<Point>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut normalised: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::invalid(
                    "road_graph",
                    format!("edge ({}, {}) references a missing node", a, b),
                ));
            }
            if a == b {
                return Err(Error::invalid("road_graph", format!("self-loop at node {}", a)));
            }
            normalised.push((a.min(b), a.max(b)));
        }
        normalised.sort_unstable();
        normalised.dedup();
        Ok(Self { nodes, edges: normalised })
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == node || b == node).count()
    }

    /// Total slot count: one per edge endpoint (sum of degrees).
    pub fn slot_count(&self) -> usize {
        2 * self.edges.len()
    }

    /// Canonical slot layout. Nodes claim one slot per incident edge, in
    /// node-id order, with each node's slots following the sorted edge list.
    /// Returns `(slot -> node, edge -> (slot at a, slot at b))`.
    pub fn canonical_slots(&self) -> (Vec<usize>, Vec<(usize, usize)>) {
        let mut slot_node = Vec::with_capacity(self.slot_count());
        let mut edge_slots = vec![(usize::MAX, usize::MAX); self.edges.len()];
        for node in 0..self.nodes.len() {
            for (ei, &(a, b)) in self.edges.iter().enumerate() {
                if a == node || b == node {
                    let slot = slot_node.len();
                    slot_node.push(node);
                    if a == node {
                        edge_slots[ei].0 = slot;
                    } else {
                        edge_slots[ei].1 = slot;
                    }
                }
            }
        }
        (slot_node, edge_slots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> PolygonRing {
        // Clockwise on screen: right, down, left, up.
        PolygonRing::from_xy(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]).unwrap()
    }

    #[test]
    fn clockwise_ring_has_positive_signed_area() {
        assert!(unit_square().signed_area() > 0.0);
        assert!(unit_square().is_clockwise());
    }

    #[test]
    fn reversing_flips_orientation() {
        let ccw = PolygonRing::from_xy(&[(0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (0.0, 0.0)]).unwrap();
        assert!(!ccw.is_clockwise());
        assert!(ccw.clockwise().is_clockwise());
    }

    #[test]
    fn consecutive_duplicates_are_dropped() {
        let ring = PolygonRing::from_xy(&[
            (0.0, 0.0),
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.0, 0.0), // wraps onto the first vertex
        ])
        .unwrap();
        assert_eq!(ring.len(), 4);
    }

    #[test]
    fn degenerate_rings_are_rejected() {
        assert!(PolygonRing::from_xy(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(PolygonRing::from_xy(&[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn canonical_start_is_topmost_then_leftmost() {
        let ring = PolygonRing::from_xy(&[(5.0, 5.0), (2.0, 1.0), (7.0, 1.0), (7.0, 5.0)]).unwrap();
        assert_eq!(ring.canonical_start(), 1); // (2, 1): smallest y, then x
    }

    #[test]
    fn containment_follows_even_odd_rule() {
        let sq = unit_square();
        assert!(sq.contains(Point::new(0.5, 0.5)));
        assert!(!sq.contains(Point::new(1.5, 0.5)));
        assert!(!sq.contains(Point::new(-0.5, 0.5)));
    }

    #[test]
    fn point_segment_distance_handles_projection_and_endpoints() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(2.0, 0.0);
        assert_eq!(point_segment_distance(Point::new(1.0, 1.0), a, b), 1.0);
        assert_eq!(point_segment_distance(Point::new(-3.0, 4.0), a, b), 5.0);
    }

    #[test]
    fn crossing_segments_are_detected() {
        let cross = segments_cross(
            Point::new(0.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
            Point::new(2.0, 0.0),
        );
        assert!(cross);
        let apart = segments_cross(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 1.0),
        );
        assert!(!apart);
    }

    #[test]
    fn road_graph_normalises_and_dedupes_edges() {
        let nodes = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let g = RoadGraph::new(nodes, vec![(1, 0), (0, 1), (2, 0)]).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 2)]);
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.slot_count(), 4);
    }

    #[test]
    fn canonical_slots_give_one_slot_per_incident_edge() {
        let nodes = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        // Path 0 - 1 - 2: node 1 has degree 2, so it owns two slots.
        let g = RoadGraph::new(nodes, vec![(0, 1), (1, 2)]).unwrap();
        let (slot_node, edge_slots) = g.canonical_slots();
        assert_eq!(slot_node, vec![0, 1, 1, 2]);
        assert_eq!(edge_slots, vec![(0, 1), (2, 3)]);
    }
}
