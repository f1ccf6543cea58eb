//! Permutation matrices over vertex slots and their decoding into geometry.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::ring::{Point, PolygonRing, RoadGraph};

/// A square binary matrix over vertex slots. Row `i` marks the clockwise
/// successor of slot `i`; unused (pad) slots mark themselves. Constructors
/// produce true permutations, but the type can hold arbitrary binary
/// matrices so that [`validate_permutation`] has something to diagnose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMatrix {
    n: usize,
    data: Vec<bool>,
}

impl PermutationMatrix {
    /// All-self matrix: every slot is its own successor.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// All-zero matrix (invalid as a permutation; useful for tests).
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![false; n * n] }
    }

    /// Builds from a successor list: `succ[i]` is the column of row `i`'s one.
    pub fn from_successors(succ: &[usize]) -> Result<Self> {
        let n = succ.len();
        let mut m = Self::zeros(n);
        for (i, &s) in succ.iter().enumerate() {
            if s >= n {
                return Err(Error::invalid(
                    "permutation",
                    format!("successor {} of slot {} out of range {}", s, i, n),
                ));
            }
            m.set(i, s, true);
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.n + col] = value;
    }

    /// Column of the first set entry in `row`, if any.
    pub fn successor(&self, row: usize) -> Option<usize> {
        self.data[row * self.n..(row + 1) * self.n]
            .iter()
            .position(|&v| v)
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.data[row * self.n..(row + 1) * self.n]
            .iter()
            .filter(|&&v| v)
            .count()
    }

    pub fn col_sum(&self, col: usize) -> usize {
        (0..self.n).filter(|&r| self.get(r, col)).count()
    }

    /// True when every row and every column sums to exactly one.
    pub fn is_permutation(&self) -> bool {
        (0..self.n).all(|i| self.row_sum(i) == 1 && self.col_sum(i) == 1)
    }

    /// Dense `f64` view (row-major), 1.0 where set.
    pub fn to_dense(&self) -> Vec<f64> {
        self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
    }
}

/// Outcome of [`validate_permutation`].
#[derive(Debug, Clone, Default)]
pub struct PermutationDiagnostics {
    /// Rows whose sum is not one, with the offending sum.
    pub row_violations: Vec<(usize, usize)>,
    /// Columns whose sum is not one, with the offending sum.
    pub col_violations: Vec<(usize, usize)>,
    /// For valid permutations: cycle length -> number of cycles.
    pub cycle_census: BTreeMap<usize, usize>,
}

impl PermutationDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.row_violations.is_empty() && self.col_violations.is_empty()
    }
}

/// Checks row/column sums and, when valid, reports the cycle census.
pub fn validate_permutation(m: &PermutationMatrix) -> PermutationDiagnostics {
    let mut d = PermutationDiagnostics::default();
    for i in 0..m.n() {
        let rs = m.row_sum(i);
        if rs != 1 {
            d.row_violations.push((i, rs));
        }
        let cs = m.col_sum(i);
        if cs != 1 {
            d.col_violations.push((i, cs));
        }
    }
    if d.is_valid() {
        let mut seen = vec![false; m.n()];
        for start in 0..m.n() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut cur = start;
            loop {
                seen[cur] = true;
                len += 1;
                cur = m.successor(cur).expect("valid permutation rows have a successor");
                if cur == start {
                    break;
                }
            }
            *d.cycle_census.entry(len).or_insert(0) += 1;
        }
    }
    d
}

/// Builds the ground-truth permutation for rings laid out contiguously in
/// slot order. `ring_sizes[r]` is the vertex count of ring `r`; slots after
/// the last ring are pads connected to themselves.
pub fn build_ring_permutation(ring_sizes: &[usize], n_slots: usize) -> Result<PermutationMatrix> {
    let total: usize = ring_sizes.iter().sum();
    if total > n_slots {
        return Err(Error::invalid(
            "ring_permutation",
            format!("{} ring vertices exceed {} slots", total, n_slots),
        ));
    }
    if let Some(&bad) = ring_sizes.iter().find(|&&s| s < 3) {
        return Err(Error::invalid(
            "ring_permutation",
            format!("ring of {} slots, need at least 3", bad),
        ));
    }
    let mut succ: Vec<usize> = (0..n_slots).collect();
    let mut base = 0;
    for &size in ring_sizes {
        for i in 0..size {
            succ[base + i] = base + (i + 1) % size;
        }
        base += size;
    }
    PermutationMatrix::from_successors(&succ)
}

/// Builds the ground-truth permutation for a road graph: every edge becomes
/// a two-cycle between one slot of each endpoint (canonical slot layout).
/// Returns the matrix and the slot -> node instance map.
pub fn build_road_permutation(graph: &RoadGraph, n_slots: usize) -> Result<(PermutationMatrix, Vec<usize>)> {
    let (slot_node, edge_slots) = graph.canonical_slots();
    if slot_node.len() > n_slots {
        return Err(Error::invalid(
            "road_permutation",
            format!("{} edge slots exceed {} slots", slot_node.len(), n_slots),
        ));
    }
    let mut succ: Vec<usize> = (0..n_slots).collect();
    for &(sa, sb) in &edge_slots {
        succ[sa] = sb;
        succ[sb] = sa;
    }
    Ok((PermutationMatrix::from_successors(&succ)?, slot_node))
}

/// Counters for everything discarded while decoding a permutation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Cycles shorter than a triangle (rings only).
    pub short_cycles: usize,
    /// Walks that left the valid slot range or merged into another path.
    pub broken_paths: usize,
    /// Cycles whose vertices collapse to fewer than three distinct points.
    pub degenerate_rings: usize,
    /// Road edges whose two slots name the same node.
    pub same_node_edges: usize,
}

impl DecodeStats {
    pub fn total(&self) -> usize {
        self.short_cycles + self.broken_paths + self.degenerate_rings + self.same_node_edges
    }
}

/// Follows successor links from every unvisited non-self slot, yielding each
/// closed cycle as a slot path. Slots at or beyond `n_valid` are pads.
fn walk_cycles(m: &PermutationMatrix, n_valid: usize, stats: &mut DecodeStats) -> Vec<Vec<usize>> {
    let mut cycles = Vec::new();
    let mut visited = vec![false; m.n()];
    for start in 0..n_valid.min(m.n()) {
        if visited[start] || m.successor(start) == Some(start) {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = start;
        loop {
            visited[cur] = true;
            path.push(cur);
            match m.successor(cur) {
                Some(s) if s == start => {
                    cycles.push(path);
                    break;
                }
                Some(s) if s < n_valid && !visited[s] => cur = s,
                _ => {
                    // Dangling into pads, revisiting another path, or a row
                    // with no successor at all: the whole walk is dropped.
                    stats.broken_paths += 1;
                    break;
                }
            }
        }
    }
    cycles
}

/// Decodes ring cycles into polygon shells. Cycle order follows the lowest
/// slot index; cycles shorter than three slots are dropped.
pub fn decode_rings(vertices: &[Point], m: &PermutationMatrix) -> (Vec<PolygonRing>, DecodeStats) {
    let mut stats = DecodeStats::default();
    let mut rings = Vec::new();
    for path in walk_cycles(m, vertices.len(), &mut stats) {
        if path.len() < 3 {
            stats.short_cycles += 1;
            continue;
        }
        match PolygonRing::new(path.iter().map(|&i| vertices[i]).collect()) {
            Ok(ring) => rings.push(ring),
            Err(_) => stats.degenerate_rings += 1,
        }
    }
    (rings, stats)
}

/// Decodes two-cycles into road edges. `slot_node` maps each slot to its
/// geometric node; an edge whose endpoints share a node is discarded.
pub fn decode_road_graph(
    vertices: &[Point],
    m: &PermutationMatrix,
    slot_node: &[usize],
) -> (RoadGraph, DecodeStats) {
    let mut stats = DecodeStats::default();
    let n_valid = vertices.len().min(slot_node.len()).min(m.n());
    let n_nodes = slot_node[..n_valid].iter().copied().max().map_or(0, |m| m + 1);
    let mut nodes = vec![None::<Point>; n_nodes];
    for i in 0..n_valid {
        let node = slot_node[i];
        if nodes[node].is_none() {
            nodes[node] = Some(vertices[i]);
        }
    }
    let mut edges = BTreeSet::new();
    for i in 0..n_valid {
        match m.successor(i) {
            Some(s) if s == i => {}
            Some(s) if s < n_valid => {
                let (a, b) = (slot_node[i], slot_node[s]);
                if a == b {
                    stats.same_node_edges += 1;
                } else {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
            _ => stats.broken_paths += 1,
        }
    }
    let graph = RoadGraph {
        nodes: nodes.into_iter().map(|n| n.unwrap_or(Point::new(0.0, 0.0))).collect(),
        edges: edges.into_iter().collect(),
    };
    (graph, stats)
}
