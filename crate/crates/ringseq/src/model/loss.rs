//! Training losses: sequence cross-entropy, permutation cross-entropy,
//! and their weighted sum.

use serde::{Deserialize, Serialize};

use crate::graph::PermutationMatrix;
use crate::tensor::{Tape, TensorId};
use crate::{Error, Result};

/// Floor applied to assignment entries before the log, so supervision on
/// an entry the soft assignment has driven to zero stays finite.
const LOG_FLOOR: f64 = 1e-12;

/// Loss weights; the defaults follow the published training setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_sequence: f64,
    pub lambda_permutation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_sequence: 1.0, lambda_permutation: 10.0 }
    }
}

/// Mean cross-entropy of the decoder logits against the target tokens,
/// averaged over every predicted position (padding included).
pub fn detection_loss(tape: &mut Tape, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
    tape.cross_entropy(logits, targets)
}

/// Cross-entropy of the soft assignment against the binary ground-truth
/// permutation: `-sum(gt * log(soft)) / n`.
pub fn permutation_loss(
    tape: &mut Tape,
    assignment: TensorId,
    gt: &PermutationMatrix,
) -> Result<TensorId> {
    let n = gt.n();
    if tape.shape(assignment) != [n, n] {
        return Err(Error::ShapeMismatch {
            op: "permutation_loss",
            lhs: tape.shape(assignment).to_vec(),
            rhs: vec![n, n],
        });
    }
    let mask = tape.constant(gt.to_dense(), &[n, n])?;
    let logp = tape.ln_clamped(assignment, LOG_FLOOR)?;
    let picked = tape.mul(mask, logp)?;
    let sum = tape.sum_all(picked)?;
    tape.scale(sum, -1.0 / n as f64)
}

/// Weighted sum of the two losses. Rejects non-finite inputs so a broken
/// step surfaces before it can touch the parameters.
pub fn total_loss(
    tape: &mut Tape,
    l_detection: TensorId,
    l_permutation: TensorId,
    weights: LossWeights,
) -> Result<TensorId> {
    for (id, name) in [(l_detection, "detection loss"), (l_permutation, "permutation loss")] {
        if !tape.to_scalar(id)?.is_finite() {
            return Err(Error::NonFinite { context: name.into() });
        }
    }
    let a = tape.scale(l_detection, weights.lambda_sequence)?;
    let b = tape.scale(l_permutation, weights.lambda_permutation)?;
    tape.add(a, b)
}
