//! Tiling a large image into fixed-size, overlapping model patches.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Origins of every patch covering a tile. Patches step by
/// `floor(patch_size · (1 − overlap))` and the final row/column is snapped
/// flush to the tile edge so coverage is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub tile_width: usize,
    pub tile_height: usize,
    pub patch_size: usize,
    pub overlap: f64,
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let mut origins = Vec::new();
    let mut o = 0;
    while o + patch <= extent {
        origins.push(o);
        o += stride;
    }
    let flush = extent - patch;
    if *origins.last().expect("patch fits at least once") != flush {
        origins.push(flush);
    }
    origins
}

/// Computes the patch grid for a tile.
pub fn tile_patches(
    tile_width: usize,
    tile_height: usize,
    patch_size: usize,
    overlap: f64,
) -> Result<PatchGrid> {
    if patch_size == 0 || patch_size > tile_width || patch_size > tile_height {
        return Err(Error::invalid(
            "tile_patches",
            format!("patch size {patch_size} must fit in {tile_width}x{tile_height}"),
        ));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid(
            "tile_patches",
            format!("overlap {overlap} must be in [0, 1)"),
        ));
    }
    let stride = ((patch_size as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let xs = axis_origins(tile_width, patch_size, stride);
    let ys = axis_origins(tile_height, patch_size, stride);
    let origins = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    Ok(PatchGrid {
        tile_width,
        tile_height,
        patch_size,
        overlap,
        origins,
    })
}

/// Extracts the square patch at `origin` from a tile image.
pub fn crop_patch(image: &RgbImage, origin: (usize, usize), patch_size: usize) -> RgbImage {
    let mut out = RgbImage::new(patch_size as u32, patch_size as u32);
    for y in 0..patch_size {
        for x in 0..patch_size {
            out.put_pixel(
                x as u32,
                y as u32,
                *image.get_pixel((origin.0 + x) as u32, (origin.1 + y) as u32),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_patch_tile_has_one_origin() {
        let grid = tile_patches(64, 64, 64, 0.1).unwrap();
        assert_eq!(grid.origins, vec![(0, 0)]);
    }

    #[test]
    fn stride_and_edge_snap_follow_the_rule() {
        let grid = tile_patches(256, 256, 64, 0.1).unwrap();
        let xs: Vec<usize> = grid.origins.iter().take(5).map(|&(x, _)| x).collect();
        assert_eq!(xs, vec![0, 57, 114, 171, 192]);
        assert_eq!(grid.origins.len(), 25);
    }

    #[test]
    fn every_pixel_is_covered() {
        for (w, h, p, ov) in [(256, 256, 64, 0.1), (100, 70, 32, 0.25), (65, 64, 64, 0.1)] {
            let grid = tile_patches(w, h, p, ov).unwrap();
            let mut covered = vec![false; w * h];
            for &(ox, oy) in &grid.origins {
                for y in oy..oy + p {
                    for x in ox..ox + p {
                        covered[y * w + x] = true;
                    }
                }
            }
            assert!(covered.iter().all(|&c| c), "{w}x{h} patch {p}");
        }
    }

    #[test]
    fn oversized_patch_is_rejected() {
        assert!(tile_patches(32, 32, 64, 0.1).is_err());
        assert!(tile_patches(64, 64, 64, 1.0).is_err());
    }

    #[test]
    fn crop_reads_the_expected_window() {
        let mut img = RgbImage::new(8, 8);
        img.put_pixel(5, 6, image::Rgb([9, 8, 7]));
        let patch = crop_patch(&img, (4, 4), 4);
        assert_eq!(*patch.get_pixel(1, 2), image::Rgb([9, 8, 7]));
    }
}
