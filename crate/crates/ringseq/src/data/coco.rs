//! COCO-format annotation files: polygon segmentations as flat
//! `[x1, y1, x2, y2, …]` lists, one annotation per polygon, with the first
//! ring the shell and any further rings its holes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{Point, Polygon, PolygonRing, PolygonSet};

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    /// Polygon mode: array of flat coordinate lists. RLE mode: an object —
    /// recognized but skipped.
    segmentation: Value,
    area: f64,
    bbox: [f64; 4],
    iscrowd: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u32,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

const BUILDING_CATEGORY: u32 = 1;

/// One image entry and its polygons, the unit the rest of the crate works
/// in.
#[derive(Debug, Clone, PartialEq)]
pub struct CocoScene {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    pub polygons: PolygonSet,
}

/// Non-fatal issues encountered while reading annotations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CocoWarnings {
    /// Annotations whose segmentation was run-length encoded.
    pub rle_skipped: usize,
}

fn ring_to_flat(ring: &PolygonRing) -> Vec<f64> {
    ring.vertices().iter().flat_map(|p| [p.x, p.y]).collect()
}

fn flat_to_ring(flat: &[f64]) -> Result<PolygonRing> {
    if flat.len() % 2 != 0 {
        return Err(Error::Dataset(format!(
            "segmentation list has odd length {}",
            flat.len()
        )));
    }
    PolygonRing::new(
        flat.chunks_exact(2)
            .map(|c| Point::new(c[0], c[1]))
            .collect(),
    )
    .map_err(|e| Error::Dataset(format!("segmentation ring: {e}")))
}

/// Serializes scenes into a COCO annotation file. Writing the same scenes
/// twice produces byte-identical output.
pub fn write_annotations(path: &Path, scenes: &[CocoScene]) -> Result<()> {
    let mut images = Vec::with_capacity(scenes.len());
    let mut annotations = Vec::new();
    let mut next_annotation = 1u64;
    for scene in scenes {
        images.push(CocoImage {
            id: scene.id,
            file_name: scene.file_name.clone(),
            width: scene.width as u32,
            height: scene.height as u32,
        });
        for polygon in &scene.polygons.polygons {
            let rings: Vec<Vec<f64>> = polygon.rings().map(ring_to_flat).collect();
            let (min, max) = polygon.bbox();
            let hole_area: f64 = polygon.holes.iter().map(PolygonRing::area).sum();
            annotations.push(CocoAnnotation {
                id: next_annotation,
                image_id: scene.id,
                category_id: BUILDING_CATEGORY,
                segmentation: serde_json::to_value(rings)?,
                area: polygon.shell.area() - hole_area,
                bbox: [min.x, min.y, max.x - min.x, max.y - min.y],
                iscrowd: 0,
            });
            next_annotation += 1;
        }
    }
    let file = CocoFile {
        images,
        annotations,
        categories: vec![CocoCategory {
            id: BUILDING_CATEGORY,
            name: "building".into(),
        }],
    };
    std::fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}

/// Parses a COCO annotation file back into scenes. Malformed JSON is
/// rejected with the parser's position diagnostics; RLE segmentations are
/// skipped and counted; an annotation naming an unknown image id is an
/// error.
pub fn read_annotations(path: &Path) -> Result<(Vec<CocoScene>, CocoWarnings)> {
    let bytes = std::fs::read(path)?;
    let file: CocoFile = serde_json::from_slice(&bytes)?;
    let mut warnings = CocoWarnings::default();

    let mut scenes: Vec<CocoScene> = file
        .images
        .iter()
        .map(|img| CocoScene {
            id: img.id,
            file_name: img.file_name.clone(),
            width: img.width as usize,
            height: img.height as usize,
            polygons: PolygonSet::default(),
        })
        .collect();
    scenes.sort_by_key(|s| s.id);

    let mut annotations = file.annotations;
    annotations.sort_by_key(|a| a.id);
    for annotation in &annotations {
        let Ok(scene_index) = scenes.binary_search_by_key(&annotation.image_id, |s| s.id) else {
            return Err(Error::Dataset(format!(
                "annotation {} references missing image id {}",
                annotation.id, annotation.image_id
            )));
        };
        let rings: Vec<Vec<f64>> = match &annotation.segmentation {
            Value::Array(_) => serde_json::from_value(annotation.segmentation.clone())?,
            Value::Object(_) => {
                warnings.rle_skipped += 1;
                continue;
            }
            other => {
                return Err(Error::Dataset(format!(
                    "annotation {}: unsupported segmentation {other}",
                    annotation.id
                )))
            }
        };
        if rings.is_empty() {
            return Err(Error::Dataset(format!(
                "annotation {}: empty segmentation",
                annotation.id
            )));
        }
        let mut rings = rings.iter().map(|flat| flat_to_ring(flat));
        let shell = rings.next().expect("checked non-empty")?;
        let holes = rings.collect::<Result<Vec<_>>>()?;
        scenes[scene_index]
            .polygons
            .polygons
            .push(Polygon { shell, holes });
    }
    Ok((scenes, warnings))
}
