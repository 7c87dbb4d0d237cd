//! Finite frequency index sets on the integer lattice.
//!
//! A discretization space is spanned by the planewaves whose frequencies lie
//! in an [`IndexSet`]. Sets are always closed under negation so that real
//! functions stay real, and entries are kept in one global canonical order
//! (ascending `|G|^2`, ties broken lexicographically) so that matrices,
//! coefficient vectors and output files are reproducible bit for bit.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrequencyError {
    #[error("dimension {0} is outside the supported range 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("index set is not closed under negation (missing {0})")]
    NotSymmetric(FreqIndex),
    #[error("multi-index {index} has nonzero components beyond dimension {dim}")]
    ComponentOutOfDimension { index: FreqIndex, dim: usize },
}

pub(crate) fn check_dim(dim: usize) -> Result<(), FrequencyError> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(FrequencyError::BadDimension(dim))
    }
}

/// A lattice multi-index `G`. Components past the problem dimension are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FreqIndex(pub [i32; MAX_DIM]);

impl FreqIndex {
    pub const ZERO: FreqIndex = FreqIndex([0; MAX_DIM]);

    /// Builds an index from up to three components; missing ones are zero.
    pub fn new(components: &[i32]) -> Self {
        assert!(components.len() <= MAX_DIM, "at most {MAX_DIM} components");
        let mut c = [0; MAX_DIM];
        c[..components.len()].copy_from_slice(components);
        FreqIndex(c)
    }

    pub fn components(&self, dim: usize) -> &[i32] {
        &self.0[..dim]
    }

    /// Exact squared Euclidean norm.
    pub fn norm2(&self) -> i64 {
        self.0.iter().map(|&c| i64::from(c) * i64::from(c)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; MAX_DIM]
    }

    /// The member of `{G, -G}` that comes first in canonical order.
    pub fn pair_representative(&self) -> FreqIndex {
        let neg = -*self;
        if neg < *self {
            neg
        } else {
            *self
        }
    }

    fn fits_dim(&self, dim: usize) -> bool {
        self.0[dim..].iter().all(|&c| c == 0)
    }
}

impl std::ops::Neg for FreqIndex {
    type Output = FreqIndex;
    fn neg(self) -> FreqIndex {
        FreqIndex(self.0.map(|c| -c))
    }
}

impl std::ops::Add for FreqIndex {
    type Output = FreqIndex;
    fn add(self, rhs: FreqIndex) -> FreqIndex {
        FreqIndex(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl std::ops::Sub for FreqIndex {
    type Output = FreqIndex;
    fn sub(self, rhs: FreqIndex) -> FreqIndex {
        FreqIndex(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl Ord for FreqIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.norm2()
            .cmp(&other.norm2())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for FreqIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for FreqIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

/// True iff `entries` has no duplicates and contains `-G` for every `G`.
pub fn validate_symmetric(entries: &[FreqIndex]) -> bool {
    let mut sorted = entries.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return false;
    }
    sorted.iter().all(|g| sorted.binary_search(&-*g).is_ok())
}

/// A finite, negation-closed set of frequencies in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet {
    dim: usize,
    entries: Vec<FreqIndex>,
}

impl IndexSet {
    /// Builds a set from arbitrary entries; duplicates are merged and the
    /// result must be closed under negation.
    pub fn new(
        dim: usize,
        entries: impl IntoIterator<Item = FreqIndex>,
    ) -> Result<Self, FrequencyError> {
        check_dim(dim)?;
        let mut entries: Vec<FreqIndex> = entries.into_iter().collect();
        if let Some(&bad) = entries.iter().find(|g| !g.fits_dim(dim)) {
            return Err(FrequencyError::ComponentOutOfDimension { index: bad, dim });
        }
        entries.sort_unstable();
        entries.dedup();
        if let Some(g) = entries
            .iter()
            .find(|g| entries.binary_search(&-**g).is_err())
        {
            return Err(FrequencyError::NotSymmetric(-*g));
        }
        Ok(IndexSet { dim, entries })
    }

    /// Builds a set from `±G` pairs given by any one member each.
    pub fn from_pairs(
        dim: usize,
        reps: impl IntoIterator<Item = FreqIndex>,
    ) -> Result<Self, FrequencyError> {
        let all: Vec<FreqIndex> = reps.into_iter().flat_map(|g| [g, -g]).collect();
        Self::new(dim, all)
    }

    pub fn empty(dim: usize) -> Result<Self, FrequencyError> {
        check_dim(dim)?;
        Ok(IndexSet {
            dim,
            entries: Vec::new(),
        })
    }

    /// The lattice ball `{G : |G| <= radius}`.
    pub fn ball(radius: u32, dim: usize) -> Result<Self, FrequencyError> {
        check_dim(dim)?;
        let r = radius as i32;
        let r2 = i64::from(r) * i64::from(r);
        let span = |k: usize| if k < dim { -r..=r } else { 0..=0 };
        let mut entries = Vec::new();
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    let g = FreqIndex([a, b, c]);
                    if g.norm2() <= r2 {
                        entries.push(g);
                    }
                }
            }
        }
        entries.sort_unstable();
        Ok(IndexSet { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FreqIndex] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &FreqIndex> {
        self.entries.iter()
    }

    /// Position of `g` in canonical order.
    pub fn position(&self, g: &FreqIndex) -> Option<usize> {
        self.entries.binary_search(g).ok()
    }

    pub fn contains(&self, g: &FreqIndex) -> bool {
        self.position(g).is_some()
    }

    /// Largest Euclidean norm present (0 for the empty set).
    pub fn max_norm(&self) -> f64 {
        self.entries.last().map_or(0.0, FreqIndex::norm)
    }

    /// Largest absolute component present.
    pub fn max_abs_component(&self) -> i32 {
        self.entries
            .iter()
            .map(FreqIndex::max_abs)
            .max()
            .unwrap_or(0)
    }

    fn same_dim(&self, other: &IndexSet) -> Result<(), FrequencyError> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(FrequencyError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            })
        }
    }

    pub fn union(&self, other: &IndexSet) -> Result<IndexSet, FrequencyError> {
        self.same_dim(other)?;
        let mut entries = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                Ordering::Less => {
                    entries.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    entries.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    entries.push(a[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        entries.extend_from_slice(&a[i..]);
        entries.extend_from_slice(&b[j..]);
        Ok(IndexSet {
            dim: self.dim,
            entries,
        })
    }

    pub fn intersection(&self, other: &IndexSet) -> Result<IndexSet, FrequencyError> {
        self.same_dim(other)?;
        let entries = self
            .entries
            .iter()
            .filter(|g| other.contains(g))
            .copied()
            .collect();
        Ok(IndexSet {
            dim: self.dim,
            entries,
        })
    }

    /// `within \ self`: the candidates of `within` not yet in this set.
    pub fn complement_candidates(&self, within: &IndexSet) -> Result<IndexSet, FrequencyError> {
        self.same_dim(within)?;
        let entries = within
            .entries
            .iter()
            .filter(|g| !self.contains(g))
            .copied()
            .collect();
        Ok(IndexSet {
            dim: self.dim,
            entries,
        })
    }

    /// Minkowski sum `{a + b}`; symmetric whenever both inputs are.
    pub fn minkowski_sum(&self, other: &IndexSet) -> Result<IndexSet, FrequencyError> {
        self.same_dim(other)?;
        let mut entries: Vec<FreqIndex> = self
            .entries
            .iter()
            .flat_map(|&a| other.entries.iter().map(move |&b| a + b))
            .collect();
        entries.sort_unstable();
        entries.dedup();
        Ok(IndexSet {
            dim: self.dim,
            entries,
        })
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.dim == other.dim && self.entries.iter().all(|g| other.contains(g))
    }

    /// Representatives of the `±G` pairs, in canonical order of the representative.
    pub fn pair_representatives(&self) -> Vec<FreqIndex> {
        self.entries
            .iter()
            .filter(|g| g.pair_representative() == **g)
            .copied()
            .collect()
    }

    /// Components of each entry, truncated to the set's dimension.
    pub fn to_tuples(&self) -> Vec<Vec<i32>> {
        self.entries
            .iter()
            .map(|g| g.components(self.dim).to_vec())
            .collect()
    }
}
