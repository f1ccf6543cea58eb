//! Binary raster masks, polygon scan conversion and mask overlap counts.

use crate::graph::{PolygonRing, PolygonSet};

/// A width x height binary image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl RasterMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&v| v)
    }

    /// In-place union with another mask of the same dimensions.
    pub fn or_assign(&mut self, other: &RasterMask) {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask dimensions must match"
        );
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    /// In-place difference: clears every pixel set in `other`.
    pub fn subtract_assign(&mut self, other: &RasterMask) {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask dimensions must match"
        );
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a &= !b;
        }
    }

    /// True if the two masks share at least one set pixel.
    pub fn intersects(&self, other: &RasterMask) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }

    /// True if every set pixel of `self` is also set in `other` and the
    /// masks are not identical.
    pub fn proper_subset_of(&self, other: &RasterMask) -> bool {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask dimensions must match"
        );
        let mut strict = false;
        for (&a, &b) in self.data.iter().zip(&other.data) {
            if a && !b {
                return false;
            }
            if b && !a {
                strict = true;
            }
        }
        strict
    }

    /// Marks pixels within Euclidean `radius` of any set pixel.
    pub fn dilated(&self, radius: f64) -> RasterMask {
        let r = radius.floor() as i64;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if (dx * dx + dy * dy) as f64 <= radius * radius {
                    offsets.push((dx, dy));
                }
            }
        }
        let mut out = RasterMask::empty(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(x, y) {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
        out
    }
}

/// Fills the pixels whose centers fall inside `rings` under the even-odd
/// rule, so holes subtract from their shells. A pixel center exactly on a
/// left/top boundary is inside; on a right/bottom boundary it is outside.
pub fn fill_rings(rings: &[&PolygonRing], width: usize, height: usize) -> RasterMask {
    let mut mask = RasterMask::empty(width, height);
    let mut crossings: Vec<f64> = Vec::new();
    for y in 0..height {
        let cy = y as f64 + 0.5;
        crossings.clear();
        for ring in rings {
            for (a, b) in ring.edges() {
                if a.y == b.y {
                    continue;
                }
                let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
                if lo.y <= cy && cy < hi.y {
                    crossings.push(lo.x + (cy - lo.y) * (hi.x - lo.x) / (hi.y - lo.y));
                }
            }
        }
        crossings.sort_by(|p, q| p.partial_cmp(q).expect("crossings are finite"));
        for pair in crossings.chunks_exact(2) {
            let x_start = ((pair[0] - 0.5).ceil() as i64).max(0) as usize;
            let x_end = ((pair[1] - 0.5).ceil() as i64).clamp(0, width as i64) as usize;
            for x in x_start..x_end {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Rasterizes a polygon set: each polygon (shell plus its holes) is filled
/// with the even-odd rule, and polygons are unioned into one mask.
pub fn rasterize(set: &PolygonSet, width: usize, height: usize) -> RasterMask {
    let mut mask = RasterMask::empty(width, height);
    for polygon in &set.polygons {
        let rings: Vec<&PolygonRing> = polygon.rings().collect();
        mask.or_assign(&fill_rings(&rings, width, height));
    }
    mask
}

/// Pixel counts comparing a predicted mask against ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaskOverlap {
    pub intersection: usize,
    pub union: usize,
    pub pred: usize,
    pub gt: usize,
    pub agree: usize,
    pub total: usize,
}

impl MaskOverlap {
    pub fn measure(pred: &RasterMask, gt: &RasterMask) -> Self {
        assert_eq!(
            (pred.width, pred.height),
            (gt.width, gt.height),
            "mask dimensions must match"
        );
        let mut o = MaskOverlap::default();
        o.total = pred.data.len();
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            o.intersection += (p && g) as usize;
            o.union += (p || g) as usize;
            o.pred += p as usize;
            o.gt += g as usize;
            o.agree += (p == g) as usize;
        }
        o
    }

    /// Intersection over union; 1.0 when both masks are empty.
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    /// Fraction of pixels where the masks agree.
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.agree as f64 / self.total as f64
        }
    }

    /// F1 of the positive class; 1.0 when both masks are empty.
    pub fn f1(&self) -> f64 {
        let denom = self.pred + self.gt;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.intersection as f64 / denom as f64
        }
    }
}

/// Raster IoU and pixel accuracy of two masks.
pub fn raster_iou(pred: &RasterMask, gt: &RasterMask) -> (f64, f64) {
    let o = MaskOverlap::measure(pred, gt);
    (o.iou(), o.accuracy())
}

/// Marks the pixels touched by the ring outlines (no fill). Each edge is
/// sampled densely so diagonal edges leave a connected trail.
pub fn trace_outlines<'a>(
    rings: impl Iterator<Item = &'a PolygonRing>,
    width: usize,
    height: usize,
) -> RasterMask {
    let mut mask = RasterMask::empty(width, height);
    for ring in rings {
        for (a, b) in ring.edges() {
            let steps = (a.dist(b) / 0.25).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                let px = a.x + t * (b.x - a.x);
                let py = a.y + t * (b.y - a.y);
                let (x, y) = (px.floor() as i64, py.floor() as i64);
                if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                    mask.set(x as usize, y as usize, true);
                }
            }
        }
    }
    mask
}
