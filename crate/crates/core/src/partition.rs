//! Filter partitions: the support of a gradient is cut into `D` near-equal
//! contiguous slices, one slice is drawn uniformly, and the update on it is
//! scaled by the number of slices `d` so that the filtered update is unbiased.

use std::ops::Range;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterPartition {
    support: Vec<usize>,
    target: usize,
    sets: Vec<Vec<usize>>,
}

/// Number of sets `min(D, len)`.
pub fn set_count(len: usize, target: usize) -> usize {
    target.min(len)
}

/// Position range of set `u` within a support of length `len` cut into
/// `set_count(len, target)` contiguous slices, longer slices first.
pub fn slice_range(len: usize, target: usize, u: usize) -> Range<usize> {
    let d = set_count(len, target);
    debug_assert!(u < d);
    let q = len / d;
    let r = len % d;
    let start = u * q + u.min(r);
    let size = q + usize::from(u < r);
    start..start + size
}

/// Draws a set index uniformly from `0..d`.
pub fn sample_set<R: Rng + ?Sized>(d: usize, rng: &mut R) -> usize {
    rng.gen_range(0..d)
}

impl FilterPartition {
    pub fn build(support: &[usize], target: usize) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if target == 0 {
            return Err(Error::invalid("D must be >= 1"));
        }
        let d = set_count(support.len(), target);
        let sets = (0..d)
            .map(|u| support[slice_range(support.len(), target, u)].to_vec())
            .collect();
        Ok(FilterPartition {
            support: support.to_vec(),
            target,
            sets,
        })
    }

    /// A partition with caller-chosen sets; no invariants are checked.
    pub fn from_sets(support: Vec<usize>, sets: Vec<Vec<usize>>) -> Self {
        let target = sets.len().max(1);
        FilterPartition {
            support,
            target,
            sets,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// The multiplier `d_ξ`.
    pub fn d(&self) -> usize {
        self.sets.len()
    }

    /// Uniform draw of one set: `(u, S_u, d)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, &[usize], usize) {
        let u = sample_set(self.d(), rng);
        (u, &self.sets[u], self.d())
    }

    /// Exact check of `d · E[S_u] = 1_support` by enumerating all sets with
    /// probability `1/d` each: every support coordinate must be covered
    /// exactly once and nothing outside the support may be covered.
    pub fn verify_unbiased(&self) -> bool {
        if self.sets.is_empty() || self.sets.iter().any(Vec::is_empty) {
            return false;
        }
        let mut counts = std::collections::BTreeMap::<usize, usize>::new();
        for set in &self.sets {
            for &j in set {
                *counts.entry(j).or_default() += 1;
            }
        }
        // d · Σ_u (1/d) · 1[j ∈ S_u] = Σ_u 1[j ∈ S_u]
        let mut support = self.support.clone();
        support.sort_unstable();
        support.dedup();
        counts.len() == support.len()
            && support
                .iter()
                .all(|j| counts.get(j).copied() == Some(1))
    }
}

/// Subset size used by [`fraction_filter`]: `v·|S|` rounded half-up, at least 1.
pub fn fraction_size(len: usize, v: f64) -> usize {
    ((v * len as f64 + 0.5).floor() as usize).clamp(1, len)
}

/// Uniform random subset of `support` with `fraction_size(|S|, v)` elements,
/// returned sorted. This is not a partition sampler; a coordinate is included
/// with probability `k/|S|`, so `|S|/k` is the multiplier that keeps the
/// update unbiased.
pub fn fraction_filter<R: Rng + ?Sized>(support: &[usize], v: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::invalid(format!("fraction must lie in (0, 1], got {v}")));
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let k = fraction_size(support.len(), v);
    if k == support.len() {
        return Ok(support.to_vec());
    }
    let mut picked: Vec<usize> = index::sample(rng, support.len(), k)
        .into_iter()
        .map(|p| support[p])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}
