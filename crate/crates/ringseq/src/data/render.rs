//! Raster rendering of generated scenes: textured achromatic background,
//! chromatic building fills and road strokes.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_pcg::Pcg64;

use crate::data::{Preset, SceneGeometry};
use crate::graph::{point_segment_distance, Point, PolygonRing};
use crate::metrics::fill_rings;

/// Half-width of a rendered road stroke in pixels.
const ROAD_HALF_WIDTH: f64 = 1.2;

/// Gray background with a gentle random gradient and per-pixel jitter.
/// All three channels are equal, so foreground (which is strongly
/// chromatic) is recoverable from the image alone.
fn background(size: usize, rng: &mut Pcg64) -> RgbImage {
    let base: f64 = rng.random_range(90.0..=140.0);
    let gx: f64 = rng.random_range(-0.35..=0.35);
    let gy: f64 = rng.random_range(-0.35..=0.35);
    let mut img = RgbImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            let jitter: f64 = rng.random_range(-12.0..=12.0);
            let v = (base + gx * x as f64 + gy * y as f64 + jitter).clamp(55.0, 200.0) as u8;
            img.put_pixel(x as u32, y as u32, Rgb([v, v, v]));
        }
    }
    img
}

/// A saturated fill color: one high channel, one low, one free, shuffled.
/// The high-low spread keeps foreground chroma far above the (zero-chroma)
/// background.
fn contrasting_color(rng: &mut Pcg64) -> [u8; 3] {
    let hi: u8 = rng.random_range(170..=235);
    let lo: u8 = rng.random_range(20..=80);
    let mid: u8 = rng.random_range(60..=170);
    let order: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let perm = order[rng.random_range(0..6)];
    let src = [hi, mid, lo];
    [src[perm[0]], src[perm[1]], src[perm[2]]]
}

pub(crate) fn render_scene(preset: &Preset, geometry: &SceneGeometry, rng: &mut Pcg64) -> RgbImage {
    let size = preset.image_size;
    let mut img = background(size, rng);
    match geometry {
        SceneGeometry::Buildings(set) => {
            for polygon in &set.polygons {
                let color = Rgb(contrasting_color(rng));
                let rings: Vec<&PolygonRing> = polygon.rings().collect();
                let mask = fill_rings(&rings, size, size);
                for y in 0..size {
                    for x in 0..size {
                        if mask.get(x, y) {
                            img.put_pixel(x as u32, y as u32, color);
                        }
                    }
                }
            }
        }
        SceneGeometry::Roads(graph) => {
            let color = Rgb(contrasting_color(rng));
            for y in 0..size {
                for x in 0..size {
                    let center = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                    let on_road = graph.edges.iter().any(|&(a, b)| {
                        point_segment_distance(center, graph.nodes[a], graph.nodes[b])
                            <= ROAD_HALF_WIDTH
                    });
                    if on_road {
                        img.put_pixel(x as u32, y as u32, color);
                    }
                }
            }
        }
    }
    img
}

/// Channels-first RGB values in [0,1], the encoder's input layout.
pub fn image_to_input(image: &RgbImage) -> Vec<f64> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut out = vec![0.0; 3 * w * h];
    for (x, y, p) in image.enumerate_pixels() {
        for c in 0..3 {
            out[(c * h + y as usize) * w + x as usize] = p.0[c] as f64 / 255.0;
        }
    }
    out
}
