//! Differentiable soft assignment by iterative row/column normalization.

use crate::tensor::{Tape, TensorId};
use crate::{Error, Result};

/// A doubly-stochastic relaxation of a permutation, living on the tape so
/// gradients flow back to the score matrix.
#[derive(Debug, Clone, Copy)]
pub struct SoftAssignment {
    /// Log of the assignment matrix (the direct output of normalization).
    pub log_entries: TensorId,
    /// The assignment matrix itself, `exp(log_entries)`.
    pub entries: TensorId,
    pub iterations_used: usize,
    pub temperature: f64,
}

/// Normalizes `scores / temperature` into a near-doubly-stochastic matrix
/// by alternating row and column log-space normalization. All iterations
/// stay on the tape, so the result is differentiable with respect to the
/// scores. Working in log space keeps 100 iterations stable for score
/// magnitudes far beyond what exponentiation would tolerate.
pub fn sinkhorn_normalize(
    tape: &mut Tape,
    scores: TensorId,
    iterations: usize,
    temperature: f64,
) -> Result<SoftAssignment> {
    let shape = tape.shape(scores);
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::invalid("sinkhorn_normalize", "scores must be a square matrix"));
    }
    if iterations == 0 {
        return Err(Error::invalid("sinkhorn_normalize", "need at least one iteration"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("sinkhorn_normalize", "temperature must be positive"));
    }
    if tape.value(scores).iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "sinkhorn scores".into() });
    }

    let mut z = tape.scale(scores, 1.0 / temperature)?;
    for _ in 0..iterations {
        z = tape.log_softmax(z)?;
        let zt = tape.permute(z, &[1, 0])?;
        let zt = tape.log_softmax(zt)?;
        z = tape.permute(zt, &[1, 0])?;
    }
    let entries = tape.exp(z)?;
    Ok(SoftAssignment {
        log_entries: z,
        entries,
        iterations_used: iterations,
        temperature,
    })
}
