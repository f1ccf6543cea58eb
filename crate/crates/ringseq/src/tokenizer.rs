//! Coordinate quantization and fixed-length vertex-token sequences.
//!
//! Vertices are discretized onto a bin grid and framed as
//! `[BOS, x1, y1, ..., xn, yn, EOS, PAD...]` with a fixed length of
//! `2 * n_vertex_slots + 2` tokens. The ring/position origin of every
//! vertex slot is recorded so permutation targets stay aligned with the
//! sequence.

use serde::{Deserialize, Serialize};

use crate::graph::{Point, PolygonRing, PolygonSet};
use crate::{Error, Result};

/// Token-id layout: coordinate bins first, then the three special tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub n_bins: usize,
}

impl Vocabulary {
    pub fn new(n_bins: usize) -> Self {
        Self { n_bins }
    }

    pub fn bos_id(&self) -> usize {
        self.n_bins
    }

    pub fn eos_id(&self) -> usize {
        self.n_bins + 1
    }

    pub fn pad_id(&self) -> usize {
        self.n_bins + 2
    }

    pub fn vocab_size(&self) -> usize {
        self.n_bins + 3
    }

    pub fn is_coordinate(&self, token: usize) -> bool {
        token < self.n_bins
    }
}

/// Uniform quantization grid over the image extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizationGrid {
    pub image_width: usize,
    pub image_height: usize,
    pub n_bins: usize,
}

impl QuantizationGrid {
    pub fn new(image_width: usize, image_height: usize, n_bins: usize) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::invalid("quantization_grid", "image extent must be positive"));
        }
        if n_bins < 2 {
            return Err(Error::invalid("quantization_grid", "need at least two bins"));
        }
        Ok(Self { image_width, image_height, n_bins })
    }

    fn quantize_axis(&self, coord: f64, extent: usize) -> (usize, bool) {
        let raw = (coord / extent as f64 * self.n_bins as f64).floor();
        let clamped = raw < 0.0 || raw > (self.n_bins - 1) as f64;
        ((raw.max(0.0) as usize).min(self.n_bins - 1), clamped)
    }

    /// Quantizes a vertex to (x-token, y-token). The flag reports whether
    /// either coordinate fell outside the image and had to be clamped.
    pub fn quantize_vertex(&self, v: Point) -> ((usize, usize), bool) {
        let (tx, cx) = self.quantize_axis(v.x, self.image_width);
        let (ty, cy) = self.quantize_axis(v.y, self.image_height);
        ((tx, ty), cx || cy)
    }

    /// Maps coordinate tokens back to the center of their bin.
    pub fn dequantize_token(&self, token_x: usize, token_y: usize) -> Result<Point> {
        if token_x >= self.n_bins || token_y >= self.n_bins {
            return Err(Error::invalid(
                "dequantize_token",
                "special tokens carry no coordinates",
            ));
        }
        Ok(Point {
            x: (token_x as f64 + 0.5) * self.image_width as f64 / self.n_bins as f64,
            y: (token_y as f64 + 0.5) * self.image_height as f64 / self.n_bins as f64,
        })
    }
}

/// A framed token sequence of fixed length `2 * n_vertex_slots + 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<usize>,
    n_vertices: usize,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, n_vertices: usize) -> Self {
        Self { tokens, n_vertices }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Number of next-token predictions the sequence supervises.
    pub fn logit_len(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Decoder inputs: every token except the last.
    pub fn inputs(&self) -> &[usize] {
        &self.tokens[..self.tokens.len() - 1]
    }

    /// Prediction targets: every token except the leading BOS.
    pub fn targets(&self) -> &[usize] {
        &self.tokens[1..]
    }
}

/// Records which ring vertex occupies each sequence slot. Slots past
/// `entries.len()` are padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMap {
    entries: Vec<(usize, usize)>,
    n_slots: usize,
}

impl SlotMap {
    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Vertex counts of the encoded rings, in slot order.
    pub fn ring_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = Vec::new();
        for &(ring, _) in &self.entries {
            if ring >= sizes.len() {
                sizes.resize(ring + 1, 0);
            }
            sizes[ring] += 1;
        }
        sizes
    }
}

/// Counters for lossy events while building a sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SequenceStats {
    pub clamped_vertices: usize,
    pub dropped_rings: usize,
    pub dropped_vertices: usize,
}

/// Canonical supervision order: every ring clockwise and rotated so its
/// topmost-leftmost vertex comes first; rings sorted by that start vertex
/// (row-major). The result depends only on the polygon set, not on input
/// order.
pub fn canonical_rings(polygons: &PolygonSet) -> Vec<PolygonRing> {
    let mut rings: Vec<PolygonRing> = polygons
        .all_rings()
        .map(|ring| {
            let ring = ring.clone().clockwise();
            ring.rotated_to(ring.canonical_start())
        })
        .collect();
    rings.sort_by(|a, b| {
        let (ka, kb) = (a.vertices()[0], b.vertices()[0]);
        (ka.y, ka.x).partial_cmp(&(kb.y, kb.x)).expect("vertices are finite")
    });
    rings
}

/// Encodes a polygon set as a framed token sequence plus the slot map
/// linking sequence slots back to ring vertices. If the scene exceeds the
/// slot budget, whole rings are dropped smallest-first (fewest vertices,
/// ties by area then by canonical order) and counted in the stats.
pub fn build_vertex_sequence(
    polygons: &PolygonSet,
    grid: QuantizationGrid,
    vocab: Vocabulary,
    n_vertex_slots: usize,
) -> (TokenSequence, SlotMap, SequenceStats) {
    debug_assert_eq!(grid.n_bins, vocab.n_bins, "grid and vocabulary must agree");
    let mut stats = SequenceStats::default();
    let mut rings = canonical_rings(polygons);

    let mut total: usize = rings.iter().map(PolygonRing::len).sum();
    while total > n_vertex_slots {
        let victim = rings
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| {
                (a.len(), a.area())
                    .partial_cmp(&(b.len(), b.area()))
                    .expect("ring areas are finite")
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
            .expect("over-budget scene has at least one ring");
        let dropped = rings.remove(victim);
        stats.dropped_rings += 1;
        stats.dropped_vertices += dropped.len();
        total -= dropped.len();
    }

    let mut tokens = Vec::with_capacity(2 * n_vertex_slots + 2);
    let mut entries = Vec::with_capacity(total);
    tokens.push(vocab.bos_id());
    for (ring_id, ring) in rings.iter().enumerate() {
        for (pos, &v) in ring.vertices().iter().enumerate() {
            let ((tx, ty), clamped) = grid.quantize_vertex(v);
            stats.clamped_vertices += clamped as usize;
            tokens.push(tx);
            tokens.push(ty);
            entries.push((ring_id, pos));
        }
    }
    tokens.push(vocab.eos_id());
    tokens.resize(2 * n_vertex_slots + 2, vocab.pad_id());

    let sequence = TokenSequence::new(tokens, entries.len());
    let slot_map = SlotMap { entries, n_slots: n_vertex_slots };
    (sequence, slot_map, stats)
}

/// Counters for malformed structure tolerated while reading a sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeWarnings {
    pub stray_specials: usize,
    pub dangling_coordinates: usize,
}

/// Reads coordinate-token pairs between BOS and the first EOS and maps
/// them back to continuous vertices. Special tokens inside the span are
/// skipped and a trailing unpaired coordinate is discarded, both counted.
pub fn sequence_to_vertices(
    tokens: &[usize],
    grid: QuantizationGrid,
    vocab: Vocabulary,
) -> (Vec<Point>, DecodeWarnings) {
    let mut warnings = DecodeWarnings::default();
    let body = if tokens.first() == Some(&vocab.bos_id()) {
        &tokens[1..]
    } else {
        tokens
    };
    let mut coords = Vec::new();
    for &token in body {
        if token == vocab.eos_id() {
            break;
        }
        if vocab.is_coordinate(token) {
            coords.push(token);
        } else {
            warnings.stray_specials += 1;
        }
    }
    if coords.len() % 2 == 1 {
        coords.pop();
        warnings.dangling_coordinates += 1;
    }
    let vertices = coords
        .chunks_exact(2)
        .map(|pair| {
            grid.dequantize_token(pair[0], pair[1])
                .expect("coordinate tokens are in range")
        })
        .collect();
    (vertices, warnings)
}
