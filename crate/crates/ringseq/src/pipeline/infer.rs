//! Inference: greedy decoding plus optimal assignment on one image, the
//! overlapping-patch strategy for larger tiles, and the raster-based
//! polygon union that merges per-patch predictions.

use std::time::Instant;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{crop_patch, image_to_input, tile_patches};
use crate::graph::{decode_rings, mask_to_polygons, Polygon, PolygonSet};
use crate::matching::hungarian_assign;
use crate::metrics::{fill_rings, RasterMask};
use crate::model::Model;
use crate::tensor::Tape;
use crate::tokenizer::sequence_to_vertices;
use crate::{Error, Result};

/// Post-merge simplification tolerance, in pixels.
const MERGE_EPSILON: f64 = 1.0;

/// What happened inside one patch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchReport {
    /// Patch origin in tile coordinates.
    pub origin: (usize, usize),
    /// Decoding hit the length cap without an end token.
    pub truncated: bool,
    /// Special tokens emitted mid-sequence and discarded.
    pub stray_specials: usize,
    /// Trailing unpaired coordinate tokens discarded.
    pub dangling_coordinates: usize,
    /// Assignment cycles dropped at ring decoding (too short, broken,
    /// degenerate).
    pub dropped_cycles: usize,
    /// Rings the patch contributed.
    pub rings: usize,
    /// The whole patch failed and contributed nothing.
    pub failed: bool,
}

/// Polygons for one tile plus per-patch diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    /// Predictions in tile coordinates.
    pub polygons: PolygonSet,
    pub patches: Vec<PatchReport>,
    /// Wall-clock seconds; excluded from serialized artifacts so outputs
    /// stay byte-deterministic.
    pub seconds: f64,
}

/// Greedy decoding, pairwise scoring and optimal assignment on one
/// model-sized input, yielding polygons in patch coordinates.
pub fn predict_single(model: &Model, input: &[f64]) -> Result<(PolygonSet, PatchReport)> {
    let mut tape = Tape::new();
    let staged = model.stage(&mut tape, false);
    let z = model.encode(&mut tape, &staged, input)?;
    let generated = model.decode_autoregressive(&mut tape, &staged, z)?;
    let mut report = PatchReport {
        truncated: generated.truncated,
        stray_specials: generated.stray_specials,
        dangling_coordinates: generated.dangling_coordinates,
        ..PatchReport::default()
    };

    let (vertices, _) = sequence_to_vertices(
        generated.sequence.tokens(),
        model.config().grid(),
        model.config().vocabulary(),
    );
    if vertices.is_empty() {
        return Ok((PolygonSet::default(), report));
    }

    let scores = model.matching_scores(&mut tape, &staged, generated.features)?;
    let n = model.config().n_vertex_slots;
    let assignment = hungarian_assign(tape.value(scores.s), n, true)?;
    let (rings, stats) = decode_rings(&vertices, &assignment);
    report.dropped_cycles = stats.total();
    report.rings = rings.len();
    Ok((PolygonSet::from_shells(rings), report))
}

/// Runs the model on an image of exactly its input size.
pub fn infer(model: &Model, image: &RgbImage) -> Result<InferenceResult> {
    let size = model.config().image_size;
    if (image.width() as usize, image.height() as usize) != (size, size) {
        return Err(Error::invalid(
            "infer",
            format!(
                "image is {}x{} but the model expects {size}x{size}; use patched mode for tiles",
                image.width(),
                image.height()
            ),
        ));
    }
    let start = Instant::now();
    let (polygons, report) = predict_single(model, &image_to_input(image))?;
    Ok(InferenceResult {
        polygons,
        patches: vec![report],
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Covers a tile with overlapping model-sized patches, predicts each one
/// independently, translates the polygons into tile coordinates and merges
/// overlaps. A failed patch is recorded and contributes nothing. A tile of
/// exactly one patch reproduces [`infer`] bit for bit.
pub fn infer_patched(model: &Model, tile: &RgbImage, overlap: f64) -> Result<InferenceResult> {
    let patch_size = model.config().image_size;
    let (tile_w, tile_h) = (tile.width() as usize, tile.height() as usize);
    let grid = tile_patches(tile_w, tile_h, patch_size, overlap)?;
    let start = Instant::now();

    let per_patch: Vec<(PolygonSet, PatchReport)> = grid
        .origins
        .par_iter()
        .map(|&origin| {
            let patch = crop_patch(tile, origin, patch_size);
            match predict_single(model, &image_to_input(&patch)) {
                Ok((polygons, mut report)) => {
                    report.origin = origin;
                    (polygons.translated(origin.0 as f64, origin.1 as f64), report)
                }
                Err(_) => (
                    PolygonSet::default(),
                    PatchReport { origin, failed: true, ..PatchReport::default() },
                ),
            }
        })
        .collect();

    let patches: Vec<PatchReport> = per_patch.iter().map(|(_, r)| *r).collect();
    let polygons = if per_patch.len() == 1 {
        per_patch.into_iter().next().expect("one patch").0
    } else {
        let combined: Vec<Polygon> =
            per_patch.into_iter().flat_map(|(set, _)| set.polygons).collect();
        merge_union(&PolygonSet::new(combined), tile_w, tile_h)
    };
    Ok(InferenceResult {
        polygons,
        patches,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Groups polygons that overlap on the raster and unions each group.
///
/// Groups are connected components under "any shared pixel". A group of
/// one polygon passes through untouched, preserving its exact vertices. A
/// larger group is rasterized — a member lying strictly inside another
/// punches a hole rather than vanishing into the union — then re-traced
/// and simplified with a 1-px tolerance, so interior contours come back
/// as holes of their surrounding shell.
pub fn merge_union(polygons: &PolygonSet, width: usize, height: usize) -> PolygonSet {
    let n = polygons.len();
    if n == 0 {
        return PolygonSet::default();
    }
    let masks: Vec<RasterMask> = polygons
        .polygons
        .iter()
        .map(|p| fill_rings(&p.rings().collect::<Vec<_>>(), width, height))
        .collect();

    // Union-find over overlap connectivity.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if masks[i].intersects(&masks[j]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    // Collect groups in order of their smallest member.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if group_of[root] == usize::MAX {
            group_of[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[group_of[root]].push(i);
    }

    let mut merged = Vec::new();
    for group in groups {
        if group.len() == 1 {
            merged.push(polygons.polygons[group[0]].clone());
            continue;
        }
        merged.extend(union_group(&group, &masks, width, height).polygons);
    }
    PolygonSet::new(merged)
}

/// Rasterizes one overlap group. Members are layered by containment
/// depth: depth-0 masks union together, a member strictly inside another
/// subtracts (a hole), one inside a hole adds back (an island), and so on.
fn union_group(group: &[usize], masks: &[RasterMask], width: usize, height: usize) -> PolygonSet {
    // Longest containment chain per member (not the container count: a
    // member inside two overlapping siblings sits at depth 1, a hole).
    // Proper containment strictly shrinks the pixel count, so walking
    // members largest-first sees every container before its contents.
    let counts: Vec<usize> = group.iter().map(|&i| masks[i].count_ones()).collect();
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut depths = vec![0usize; group.len()];
    for (rank, &pos) in order.iter().enumerate() {
        for &container in &order[..rank] {
            if counts[container] > counts[pos]
                && masks[group[pos]].proper_subset_of(&masks[group[container]])
            {
                depths[pos] = depths[pos].max(depths[container] + 1);
            }
        }
    }
    let max_depth = depths.iter().copied().max().unwrap_or(0);

    let mut mask = RasterMask::empty(width, height);
    for depth in 0..=max_depth {
        let mut level = RasterMask::empty(width, height);
        for (&member, &d) in group.iter().zip(&depths) {
            if d == depth {
                level.or_assign(&masks[member]);
            }
        }
        if depth % 2 == 0 {
            mask.or_assign(&level);
        } else {
            mask.subtract_assign(&level);
        }
    }
    mask_to_polygons(&mask, MERGE_EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_scene, Preset};
    use crate::graph::PolygonRing;
    use crate::metrics::{raster_iou, rasterize};
    use crate::model::ModelConfig;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
        Polygon::new(PolygonRing::from_xy(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]).unwrap())
    }

    #[test]
    fn identical_squares_merge_to_one() {
        let set = PolygonSet::new(vec![rect(5.0, 5.0, 20.0, 20.0), rect(5.0, 5.0, 20.0, 20.0)]);
        let merged = merge_union(&set, 32, 32);
        assert_eq!(merged.len(), 1);
        assert_eq!(
            rasterize(&merged, 32, 32).as_slice(),
            rasterize(&set, 32, 32).as_slice(),
        );
    }

    #[test]
    fn half_overlapping_rectangles_union_within_a_pixel() {
        let a = rect(5.0, 5.0, 25.0, 15.0);
        let b = rect(15.0, 10.0, 35.0, 20.0);
        let mut truth = rasterize(&PolygonSet::new(vec![a.clone()]), 40, 25);
        truth.or_assign(&rasterize(&PolygonSet::new(vec![b.clone()]), 40, 25));

        let merged = merge_union(&PolygonSet::new(vec![a, b]), 40, 25);
        assert_eq!(merged.len(), 1);
        let (iou, _) = raster_iou(&rasterize(&merged, 40, 25), &truth);
        assert!(iou >= 0.98, "merged union IoU {iou}");
    }

    #[test]
    fn disjoint_polygons_pass_through_exactly() {
        let mut with_hole = rect(3.25, 3.75, 12.5, 12.25);
        with_hole.holes.push(
            PolygonRing::from_xy(&[(6.0, 6.0), (9.0, 6.5), (8.5, 9.0)]).unwrap(),
        );
        let set = PolygonSet::new(vec![with_hole, rect(20.0, 20.0, 30.0, 27.5)]);
        let merged = merge_union(&set, 40, 40);
        assert_eq!(merged, set);
    }

    #[test]
    fn contained_polygon_becomes_a_hole() {
        let outer = rect(10.0, 10.0, 40.0, 40.0);
        let inner = rect(20.0, 20.0, 30.0, 30.0);
        let merged = merge_union(&PolygonSet::new(vec![outer.clone(), inner.clone()]), 50, 50);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged.polygons[0].holes.len(), 1);

        let mut expected = rasterize(&PolygonSet::new(vec![outer]), 50, 50);
        expected.subtract_assign(&rasterize(&PolygonSet::new(vec![inner]), 50, 50));
        assert_eq!(rasterize(&merged, 50, 50).as_slice(), expected.as_slice());
    }

    #[test]
    fn nested_containment_alternates_fill() {
        let set = PolygonSet::new(vec![
            rect(5.0, 5.0, 45.0, 45.0),
            rect(12.0, 12.0, 38.0, 38.0),
            rect(20.0, 20.0, 30.0, 30.0),
        ]);
        let merged = merge_union(&set, 50, 50);
        let mask = rasterize(&merged, 50, 50);
        assert!(mask.get(7, 7), "outer band filled");
        assert!(!mask.get(15, 15), "first nesting level is a hole");
        assert!(mask.get(25, 25), "second nesting level is an island");
    }

    #[test]
    fn merge_is_idempotent() {
        // Overlapping pair, a containment pair and a lone polygon, all
        // groups separated by more than the simplification tolerance.
        let set = PolygonSet::new(vec![
            rect(2.0, 2.0, 12.0, 10.0),
            rect(8.0, 6.0, 20.0, 14.0),
            rect(30.0, 2.0, 50.0, 20.0),
            rect(36.0, 7.0, 44.0, 15.0),
            rect(2.0, 30.0, 14.0, 44.0),
        ]);
        let once = merge_union(&set, 60, 50);
        let twice = merge_union(&once, 60, 50);
        assert_eq!(twice, once);
        assert_eq!(
            rasterize(&twice, 60, 50).as_slice(),
            rasterize(&once, 60, 50).as_slice(),
        );
    }

    #[test]
    fn merge_output_does_not_depend_on_input_order() {
        let mut polygons = vec![
            rect(2.0, 2.0, 12.0, 10.0),
            rect(8.0, 6.0, 20.0, 14.0),
            rect(30.0, 2.0, 42.0, 12.0),
        ];
        let forward = merge_union(&PolygonSet::new(polygons.clone()), 50, 20);
        polygons.reverse();
        let backward = merge_union(&PolygonSet::new(polygons), 50, 20);
        assert_eq!(
            rasterize(&forward, 50, 20).as_slice(),
            rasterize(&backward, 50, 20).as_slice(),
        );
    }

    #[test]
    fn single_patch_tile_equals_direct_inference() {
        let model = Model::init(ModelConfig::tiny(), 5).unwrap();
        let (sample, _) = generate_scene(11, &Preset::tiny());
        let direct = infer(&model, &sample.image).unwrap();
        let patched = infer_patched(&model, &sample.image, 0.1).unwrap();
        assert_eq!(patched.polygons, direct.polygons);
        assert_eq!(patched.patches.len(), 1);
        assert_eq!(patched.patches[0].origin, (0, 0));
    }

    #[test]
    fn wrong_image_size_is_rejected_with_a_hint() {
        let model = Model::init(ModelConfig::tiny(), 5).unwrap();
        let image = RgbImage::new(128, 128);
        let err = infer(&model, &image).unwrap_err();
        assert!(err.to_string().contains("patched"));
    }
}
