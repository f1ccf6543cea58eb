//! Polygon rings, road graphs and the permutation matrices that connect
//! predicted vertices into closed shapes.
//!
//! A permutation matrix over vertex slots encodes, row by row, the clockwise
//! successor of each vertex. Cycles of the permutation are polygon rings
//! (buildings) or two-cycles are edges (roads); unused slots point at
//! themselves. [`decode_rings`] and [`decode_road_graph`] walk the cycles
//! back into geometry, [`build_ring_permutation`] and
//! [`build_road_permutation`] construct the ground-truth matrices.

mod contour;
mod permutation;
mod ring;
mod simplify;

pub use contour::mask_to_polygons;
pub use permutation::{
    build_ring_permutation, build_road_permutation, decode_rings, decode_road_graph,
    validate_permutation, DecodeStats, PermutationDiagnostics, PermutationMatrix,
};
pub use ring::{
    point_segment_distance, segments_cross, Point, Polygon, PolygonRing, PolygonSet, RoadGraph,
};
pub use simplify::{douglas_peucker_polyline, douglas_peucker_ring};
