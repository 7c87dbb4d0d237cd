//! Bulk (Dörfler) marking over `±G` frequency pairs.
//!
//! Pairs are the atoms of marking, so every marked set is closed under
//! negation. Sorting pairs by contribution and taking the shortest prefix
//! that reaches `θ² η²` yields a set of minimal cardinality: the `k` largest
//! contributions have the largest possible sum among all `k`-subsets.

use thiserror::Error;

use crate::frequency::{FreqIndex, FrequencyError, IndexSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarkingError {
    #[error("marking parameter must lie in (0, 1), got {0}")]
    BadTheta(f64),
    #[error("no candidate frequencies although the estimator is nonzero")]
    EmptyCandidates,
    #[error("candidates carry only a fraction {achievable} of the estimator, below theta {theta}")]
    Unreachable { achievable: f64, theta: f64 },
    #[error(transparent)]
    Frequency(#[from] FrequencyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkResult {
    /// `δG`, symmetric and disjoint from the current set.
    pub marked: IndexSet,
    /// `η(U; δG) / η(U)`.
    pub achieved_fraction: f64,
    pub pairs_considered: usize,
    pub pairs_marked: usize,
}

/// Order in which candidate pairs are taken: larger contribution first, then
/// the representative's canonical order (smaller `|G|²`, then lexicographic).
pub fn marking_order(contribs: &[(FreqIndex, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..contribs.len()).collect();
    order.sort_by(|&i, &j| {
        contribs[j]
            .1
            .total_cmp(&contribs[i].1)
            .then_with(|| contribs[i].0.cmp(&contribs[j].0))
    });
    order
}

/// Marks a minimal number of pairs with `Σ contributions >= θ² · total_sq`.
///
/// `contribs` holds one entry per `±G` pair outside the current index set;
/// `total_sq` is `η²(U)` including any on-set part.
pub fn dorfler_mark(
    dim: usize,
    contribs: &[(FreqIndex, f64)],
    theta: f64,
    total_sq: f64,
) -> Result<MarkResult, MarkingError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(MarkingError::BadTheta(theta));
    }
    if contribs.is_empty() && total_sq > 0.0 {
        return Err(MarkingError::EmptyCandidates);
    }
    let threshold = theta * theta * total_sq;
    let available: f64 = contribs.iter().map(|p| p.1).sum();
    if available < threshold {
        return Err(MarkingError::Unreachable {
            achievable: (available / total_sq).sqrt(),
            theta,
        });
    }
    let mut acc = 0.0;
    let mut reps = Vec::new();
    for i in marking_order(contribs) {
        if acc >= threshold && !(threshold == 0.0 && reps.is_empty() && total_sq > 0.0) {
            break;
        }
        acc += contribs[i].1;
        reps.push(contribs[i].0);
    }
    let achieved_fraction = if total_sq > 0.0 {
        (acc / total_sq).sqrt()
    } else {
        1.0
    };
    Ok(MarkResult {
        pairs_marked: reps.len(),
        marked: IndexSet::from_pairs(dim, reps)?,
        achieved_fraction,
        pairs_considered: contribs.len(),
    })
}

/// Marks every candidate pair (used when the threshold is unreachable).
pub fn mark_all(
    dim: usize,
    contribs: &[(FreqIndex, f64)],
    total_sq: f64,
) -> Result<MarkResult, MarkingError> {
    let acc: f64 = contribs.iter().map(|p| p.1).sum();
    Ok(MarkResult {
        marked: IndexSet::from_pairs(dim, contribs.iter().map(|p| p.0))?,
        achieved_fraction: if total_sq > 0.0 {
            (acc / total_sq).sqrt()
        } else {
            1.0
        },
        pairs_considered: contribs.len(),
        pairs_marked: contribs.len(),
    })
}
