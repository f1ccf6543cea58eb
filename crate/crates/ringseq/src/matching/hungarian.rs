//! Exact optimal assignment for square score matrices.

use crate::graph::PermutationMatrix;
use crate::{Error, Result};

/// Solves the assignment problem exactly in O(n^3) time with the
/// potential-based shortest-augmenting-path method. `scores` is row-major
/// n x n; when `maximize` is set the total score of the returned
/// permutation is maximal, otherwise minimal. Among equally good columns
/// the scan keeps the first, so ties break toward smaller row and column
/// indices and the result is deterministic.
pub fn hungarian_assign(scores: &[f64], n: usize, maximize: bool) -> Result<PermutationMatrix> {
    if scores.len() != n * n {
        return Err(Error::invalid("hungarian_assign", "scores must be a square matrix"));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "assignment scores".into() });
    }
    if n == 0 {
        return Ok(PermutationMatrix::zeros(0));
    }
    let cost = |i: usize, j: usize| {
        let s = scores[i * n + j];
        if maximize {
            -s
        } else {
            s
        }
    };

    // Column j is matched to row `row_of[j]`; index 0 is a virtual slot.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut row_of = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let slack = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if slack < min_slack[j] {
                    min_slack[j] = slack;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut matrix = PermutationMatrix::zeros(n);
    for j in 1..=n {
        matrix.set(row_of[j] - 1, j - 1, true);
    }
    Ok(matrix)
}
