//! Training-time augmentation: the eight axis-preserving symmetries of the
//! square (rotations and flips) composed with radiometric jitter. The
//! geometry is transformed with the image and the supervision targets are
//! rebuilt, so augmented samples are exactly as consistent as generated
//! ones.

use image::RgbImage;
use rand::Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use crate::data::{canonical_road_graph, rebuild_targets, Preset, SceneGeometry, SceneSample};
use crate::error::Result;
use crate::graph::{Point, Polygon, PolygonRing, PolygonSet};

/// One concrete augmentation draw. `transform` indexes the dihedral group:
/// bit 2 mirrors horizontally, the low bits count quarter turns applied
/// after the mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub transform: u8,
    pub brightness: f64,
    pub contrast: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        transform: 0,
        brightness: 1.0,
        contrast: 1.0,
        noise_sigma: 0.0,
        noise_seed: 0,
    };

    pub fn sample(rng: &mut Pcg64) -> AugmentParams {
        AugmentParams {
            transform: rng.random_range(0..8),
            brightness: rng.random_range(0.8..=1.2),
            contrast: rng.random_range(0.85..=1.15),
            noise_sigma: rng.random_range(0.0..=0.05),
            noise_seed: rng.random(),
        }
    }
}

/// Applies dihedral transform `k` to a point in a `size`-pixel square.
/// Half-integer coordinates map to half-integer coordinates, so bin-center
/// alignment survives augmentation.
pub(crate) fn dihedral_point(p: Point, size: f64, k: u8) -> Point {
    let mut p = if k & 4 != 0 {
        Point::new(size - p.x, p.y)
    } else {
        p
    };
    for _ in 0..(k & 3) {
        // Quarter turn clockwise on screen (y grows downward).
        p = Point::new(size - p.y, p.x);
    }
    p
}

fn transform_image(image: &RgbImage, k: u8) -> RgbImage {
    let size = image.width();
    let mut out = RgbImage::new(size, size);
    for (x, y, pixel) in image.enumerate_pixels() {
        let c = dihedral_point(
            Point::new(x as f64 + 0.5, y as f64 + 0.5),
            size as f64,
            k,
        );
        out.put_pixel((c.x - 0.5) as u32, (c.y - 0.5) as u32, *pixel);
    }
    out
}

fn transform_ring(ring: &PolygonRing, size: f64, k: u8) -> PolygonRing {
    PolygonRing::new(
        ring.vertices()
            .iter()
            .map(|&p| dihedral_point(p, size, k))
            .collect(),
    )
    .expect("dihedral transforms preserve ring validity")
}

fn transform_geometry(geometry: &SceneGeometry, size: f64, k: u8) -> Result<SceneGeometry> {
    Ok(match geometry {
        SceneGeometry::Buildings(set) => SceneGeometry::Buildings(PolygonSet::new(
            set.polygons
                .iter()
                .map(|p| Polygon {
                    shell: transform_ring(&p.shell, size, k),
                    holes: p.holes.iter().map(|h| transform_ring(h, size, k)).collect(),
                })
                .collect(),
        )),
        SceneGeometry::Roads(graph) => {
            let moved = crate::graph::RoadGraph::new(
                graph
                    .nodes
                    .iter()
                    .map(|&p| dihedral_point(p, size, k))
                    .collect(),
                graph.edges.clone(),
            )?;
            SceneGeometry::Roads(canonical_road_graph(&moved)?)
        }
    })
}

fn jitter_image(image: &mut RgbImage, params: &AugmentParams) {
    if *params == AugmentParams::IDENTITY {
        return;
    }
    let mut noise = Pcg64::seed_from_u64(params.noise_seed);
    for pixel in image.pixels_mut() {
        for channel in pixel.0.iter_mut() {
            let v = *channel as f64 / 255.0;
            let v = (v - 0.5) * params.contrast + 0.5;
            let v = v * params.brightness;
            let n: f64 = noise.sample(StandardNormal);
            let v = v + params.noise_sigma * n;
            *channel = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
}

/// Applies a fixed augmentation draw. The identity draw returns the sample
/// unchanged.
pub fn augment_with(
    sample: &SceneSample,
    preset: &Preset,
    params: &AugmentParams,
) -> Result<SceneSample> {
    let size = preset.image_size as f64;
    let geometry = transform_geometry(&sample.geometry, size, params.transform)?;
    let mut image = transform_image(&sample.image, params.transform);
    jitter_image(&mut image, params);
    let (sequence, permutation, _) = rebuild_targets(&geometry, preset)?;
    Ok(SceneSample {
        scene_id: sample.scene_id,
        image,
        geometry,
        sequence,
        permutation,
    })
}

/// Draws augmentation parameters from `seed` and applies them.
pub fn augment(sample: &SceneSample, preset: &Preset, seed: u64) -> Result<SceneSample> {
    let mut rng = Pcg64::seed_from_u64(seed);
    augment_with(sample, preset, &AugmentParams::sample(&mut rng))
}
