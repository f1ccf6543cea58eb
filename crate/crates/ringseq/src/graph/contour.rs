//! Extracts polygon boundaries from binary masks.
//!
//! Boundary edges run along the pixel-corner lattice with the foreground on
//! a fixed side, so shells come out clockwise (positive signed area in
//! image coordinates) and hole boundaries counterclockwise. Foreground is
//! treated as 8-connected: where two foreground pixels meet only at a
//! corner, the trace turns left and keeps them on one contour.

use crate::graph::{douglas_peucker_ring, Point, Polygon, PolygonRing, PolygonSet};
use crate::metrics::RasterMask;

struct BoundaryEdge {
    start: usize,
    end: usize,
    dir: u8,
}

/// Traces a binary mask into polygons with holes, then simplifies each
/// ring with Douglas-Peucker at tolerance `epsilon`. Traced vertices lie on
/// the pixel-corner lattice with collinear runs compressed, so at
/// `epsilon = 0` rasterizing the result reproduces the input mask exactly.
/// Polygons are ordered by the canonical start vertex of their shell.
pub fn mask_to_polygons(mask: &RasterMask, epsilon: f64) -> PolygonSet {
    let (w, h) = (mask.width(), mask.height());
    let corner_w = w + 1;
    let corner = |x: usize, y: usize| y * corner_w + x;

    let fg = |x: i64, y: i64| -> bool {
        x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && mask.get(x as usize, y as usize)
    };

    // One directed edge per exposed pixel side, foreground kept on the
    // clockwise side of the direction of travel.
    let mut edges: Vec<BoundaryEdge> = Vec::new();
    let mut outgoing: Vec<[i32; 2]> = vec![[-1, -1]; corner_w * (h + 1)];
    let mut add = |edges: &mut Vec<BoundaryEdge>, start: usize, end: usize, dir: u8| {
        let slot = &mut outgoing[start];
        let id = edges.len() as i32;
        if slot[0] < 0 {
            slot[0] = id;
        } else {
            slot[1] = id;
        }
        edges.push(BoundaryEdge { start, end, dir });
    };
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            if !fg(xi, yi - 1) {
                add(&mut edges, corner(x, y), corner(x + 1, y), 0);
            }
            if !fg(xi + 1, yi) {
                add(&mut edges, corner(x + 1, y), corner(x + 1, y + 1), 1);
            }
            if !fg(xi, yi + 1) {
                add(&mut edges, corner(x + 1, y + 1), corner(x, y + 1), 2);
            }
            if !fg(xi - 1, yi) {
                add(&mut edges, corner(x, y + 1), corner(x, y), 3);
            }
        }
    }

    // Every edge has a unique successor: at corners where two contours
    // touch, preferring the left turn keeps diagonal foreground joined.
    let successor = |id: usize| -> usize {
        let edge = &edges[id];
        let mut best: Option<(u8, usize)> = None;
        for cand in outgoing[edge.end] {
            if cand < 0 {
                continue;
            }
            let cand = cand as usize;
            let rank = (edges[cand].dir + 4 - edges[id].dir + 1) % 4;
            if best.map_or(true, |(r, _)| rank < r) {
                best = Some((rank, cand));
            }
        }
        best.expect("boundary corners always have an outgoing edge").1
    };

    let mut used = vec![false; edges.len()];
    let mut shells: Vec<PolygonRing> = Vec::new();
    let mut holes: Vec<PolygonRing> = Vec::new();
    for first in 0..edges.len() {
        if used[first] {
            continue;
        }
        let mut cycle = vec![first];
        used[first] = true;
        let mut id = successor(first);
        while id != first {
            used[id] = true;
            cycle.push(id);
            id = successor(id);
        }
        // Keep a corner only where the direction of travel changes.
        let mut vertices = Vec::new();
        for (k, &id) in cycle.iter().enumerate() {
            let prev = cycle[(k + cycle.len() - 1) % cycle.len()];
            if edges[id].dir != edges[prev].dir {
                let (x, y) = (edges[id].start % corner_w, edges[id].start / corner_w);
                vertices.push(Point { x: x as f64, y: y as f64 });
            }
        }
        let ring = PolygonRing::new(vertices).expect("traced contour has at least four corners");
        let ring = ring.rotated_to(ring.canonical_start());
        if ring.is_clockwise() {
            shells.push(ring);
        } else {
            holes.push(ring);
        }
    }

    // A hole belongs to the smallest shell that contains a point of its
    // cavity; nested islands become separate polygons.
    let mut polygons: Vec<Polygon> = shells
        .into_iter()
        .map(|shell| Polygon { shell, holes: Vec::new() })
        .collect();
    for hole in holes {
        let inside = cavity_point(&hole);
        let owner = polygons
            .iter_mut()
            .filter(|p| p.shell.contains(inside))
            .min_by(|a, b| {
                a.shell
                    .area()
                    .partial_cmp(&b.shell.area())
                    .expect("ring areas are finite")
            });
        if let Some(polygon) = owner {
            polygon.holes.push(hole);
        }
    }
    if epsilon > 0.0 {
        polygons = polygons
            .into_iter()
            .filter_map(|p| {
                let shell = douglas_peucker_ring(&p.shell, epsilon)?;
                let shell = shell.rotated_to(shell.canonical_start());
                let holes = p
                    .holes
                    .iter()
                    .filter_map(|h| douglas_peucker_ring(h, epsilon))
                    .map(|h| h.rotated_to(h.canonical_start()))
                    .collect();
                Some(Polygon { shell, holes })
            })
            .collect();
    }
    polygons.sort_by(|a, b| {
        let ka = a.shell.vertices()[0];
        let kb = b.shell.vertices()[0];
        (ka.y, ka.x).partial_cmp(&(kb.y, kb.x)).expect("vertices are finite")
    });
    for polygon in &mut polygons {
        polygon.holes.sort_by(|a, b| {
            let (ka, kb) = (a.vertices()[0], b.vertices()[0]);
            (ka.y, ka.x).partial_cmp(&(kb.y, kb.x)).expect("vertices are finite")
        });
    }
    PolygonSet::new(polygons)
}

/// A pixel center strictly inside the given hole boundary. The cavity
/// encloses at least one whole pixel, so the scan always finds one.
fn cavity_point(hole: &PolygonRing) -> Point {
    let (min, max) = hole.bbox();
    let (y0, y1) = (min.y.floor() as i64, max.y.ceil() as i64);
    let (x0, x1) = (min.x.floor() as i64, max.x.ceil() as i64);
    for y in y0..y1 {
        for x in x0..x1 {
            let p = Point {
                x: x as f64 + 0.5,
                y: y as f64 + 0.5,
            };
            if hole.contains(p) {
                return p;
            }
        }
    }
    unreachable!("hole boundary encloses at least one pixel center")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{rasterize, RasterMask};
    use rand::Rng;
    use rand_pcg::Pcg64;

    fn mask_from_rows(rows: &[&str]) -> RasterMask {
        let mut mask = RasterMask::empty(rows[0].len(), rows.len());
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                mask.set(x, y, ch == '#');
            }
        }
        mask
    }

    fn xy(ring: &PolygonRing) -> Vec<(f64, f64)> {
        ring.vertices().iter().map(|p| (p.x, p.y)).collect()
    }

    #[test]
    fn single_pixel_becomes_unit_square() {
        let mut mask = RasterMask::empty(6, 6);
        mask.set(2, 3, true);
        let set = mask_to_polygons(&mask, 0.0);
        assert_eq!(set.polygons.len(), 1);
        assert!(set.polygons[0].holes.is_empty());
        assert_eq!(
            xy(&set.polygons[0].shell),
            vec![(2.0, 3.0), (3.0, 3.0), (3.0, 4.0), (2.0, 4.0)]
        );
    }

    #[test]
    fn rectangle_compresses_to_four_corners() {
        let mask = mask_from_rows(&["....", ".###", ".###", "...."]);
        let set = mask_to_polygons(&mask, 0.0);
        assert_eq!(set.polygons.len(), 1);
        assert_eq!(
            xy(&set.polygons[0].shell),
            vec![(1.0, 1.0), (4.0, 1.0), (4.0, 3.0), (1.0, 3.0)]
        );
    }

    #[test]
    fn cavity_becomes_counterclockwise_hole() {
        let mask = mask_from_rows(&["###", "#.#", "###"]);
        let set = mask_to_polygons(&mask, 0.0);
        assert_eq!(set.polygons.len(), 1);
        let polygon = &set.polygons[0];
        assert_eq!(polygon.holes.len(), 1);
        assert!(polygon.shell.is_clockwise());
        assert!(!polygon.holes[0].is_clockwise());
        assert_eq!(
            xy(&polygon.holes[0]),
            vec![(1.0, 1.0), (1.0, 2.0), (2.0, 2.0), (2.0, 1.0)]
        );
    }

    #[test]
    fn diagonal_pixels_trace_as_one_contour() {
        let mask = mask_from_rows(&["#.", ".#"]);
        let set = mask_to_polygons(&mask, 0.0);
        assert_eq!(set.polygons.len(), 1);
        let shell = &set.polygons[0].shell;
        assert_eq!(shell.len(), 8);
        assert!(shell.is_clockwise());
        assert_eq!(rasterize(&set, 2, 2), mask);
    }

    #[test]
    fn island_inside_hole_is_its_own_polygon() {
        let mask = mask_from_rows(&["#####", "#...#", "#.#.#", "#...#", "#####"]);
        let set = mask_to_polygons(&mask, 0.0);
        assert_eq!(set.polygons.len(), 2);
        let outer = &set.polygons[0];
        let island = &set.polygons[1];
        assert_eq!(outer.holes.len(), 1);
        assert!(island.holes.is_empty());
        assert_eq!(island.shell.len(), 4);
        assert_eq!(rasterize(&set, 5, 5), mask);
    }

    #[test]
    fn simplification_stays_within_a_one_pixel_band() {
        use crate::metrics::trace_outlines;
        // Staircase triangle: simplification straightens the hypotenuse.
        let mask = mask_from_rows(&[
            "#.......",
            "##......",
            "###.....",
            "####....",
            "#####...",
            "######..",
            "#######.",
            "########",
        ]);
        let exact = mask_to_polygons(&mask, 0.0);
        let simplified = mask_to_polygons(&mask, 1.0);
        let traced: usize = exact.total_vertex_count();
        let kept: usize = simplified.total_vertex_count();
        assert!(kept < traced, "expected fewer vertices, got {kept} of {traced}");

        let band = trace_outlines(exact.all_rings(), 8, 8).dilated(1.0);
        let redrawn = rasterize(&simplified, 8, 8);
        for y in 0..8 {
            for x in 0..8 {
                if redrawn.get(x, y) != mask.get(x, y) {
                    assert!(band.get(x, y), "mismatch at ({x}, {y}) outside boundary band");
                }
            }
        }
    }

    #[test]
    fn random_masks_round_trip_exactly() {
        let mut rng = Pcg64::new(11, 700);
        for density_step in 0..5 {
            let density = 0.15 + 0.15 * density_step as f64;
            for _ in 0..10 {
                let mut mask = RasterMask::empty(16, 16);
                for y in 0..16 {
                    for x in 0..16 {
                        if rng.random::<f64>() < density {
                            mask.set(x, y, true);
                        }
                    }
                }
                let set = mask_to_polygons(&mask, 0.0);
                assert_eq!(rasterize(&set, 16, 16), mask);
            }
        }
    }
}
