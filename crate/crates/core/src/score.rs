//! kNN score function and the constant-false-alarm-rate anomaly test.
//!
//! For a query `q` the score is the fraction of reference rows whose K-th
//! neighbor radius is at least the query's own radius. Reference rows
//! measure their radius with the K+1-th neighbor (their own zero-distance
//! self match is skipped); external queries always use the K-th. A query is
//! a local anomaly when its score is at most `tau`, which makes `tau` the
//! per-test false alarm rate for queries drawn from the reference
//! distribution.

use serde::{Deserialize, Serialize};

use crate::data::{AttributeRange, Dataset};
use crate::distance::{check_alpha, ranked_count, ranked_distance_with, volume_distance, DistanceCache};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyParams {
    pub k_neighbors: usize,
    pub tau: f64,
    pub alpha: f64,
}

impl AnomalyParams {
    pub fn new(k_neighbors: usize, tau: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            k_neighbors,
            tau,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(invalid("tau", format!("{} is not in (0, 1)", self.tau)));
        }
        check_alpha(self.alpha)
    }

    /// Checks `K < N_s` for a reference set of `rows` rows.
    pub fn validate_for(&self, rows: usize) -> Result<()> {
        self.validate()?;
        if self.k_neighbors >= rows {
            return Err(invalid(
                "k",
                format!("K = {} must be below the reference size {rows}", self.k_neighbors),
            ));
        }
        Ok(())
    }
}

/// Outcome of the per-node test: `+1` anomalous, `-1` normal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Anomalous,
    Normal,
}

impl Label {
    pub fn sign(self) -> i8 {
        match self {
            Label::Anomalous => 1,
            Label::Normal => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Self {
        if sign > 0 {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }

    pub fn is_anomalous(self) -> bool {
        self == Label::Anomalous
    }
}

/// `+1` iff `p_hat <= tau`.
pub fn is_anomalous(p_hat: f64, tau: f64) -> Label {
    if p_hat <= tau {
        Label::Anomalous
    } else {
        Label::Normal
    }
}

/// K-th smallest `h_alpha` distance from `query` (already restricted to
/// `range`) to the reference rows on `range`, skipping row `exclude` if set.
pub fn kth_neighbor_radius(
    reference: &Dataset,
    range: AttributeRange,
    query: &[f64],
    k: usize,
    alpha: f64,
    exclude: Option<usize>,
) -> Result<f64> {
    let range = AttributeRange::new(range.start, range.end, reference.dims())?;
    if query.len() != range.len() {
        return Err(Error::LengthMismatch {
            left: query.len(),
            right: range.len(),
        });
    }
    check_alpha(alpha)?;
    let keep = ranked_count(range.len(), alpha);
    if keep == 0 {
        return Err(invalid("alpha", format!("keeps no attributes on {range}")));
    }
    let available = reference.rows() - usize::from(exclude.is_some_and(|e| e < reference.rows()));
    if k == 0 || k > available {
        return Err(Error::NeighborOutOfRange { k, available });
    }
    let mut scratch = Vec::with_capacity(range.len());
    let mut dists: Vec<f64> = (0..reference.rows())
        .filter(|&i| Some(i) != exclude)
        .map(|i| ranked_distance_with(query, reference.slice(i, range), keep, &mut scratch))
        .collect();
    Ok(kth_smallest(&mut dists, k))
}

/// K-th smallest value (1-based); reorders `values`.
pub(crate) fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Reference radii of one tree node, kept both in row order (for scoring
/// reference rows) and sorted (for scoring queries by binary search).
#[derive(Clone, Debug, PartialEq)]
pub struct NodeScoreContext {
    range: AttributeRange,
    k: usize,
    alpha: f64,
    radii: Vec<f64>,
    sorted: Vec<f64>,
}

impl NodeScoreContext {
    pub fn from_radii(range: AttributeRange, k: usize, alpha: f64, radii: Vec<f64>) -> Self {
        let mut sorted = radii.clone();
        sorted.sort_by(f64::total_cmp);
        Self {
            range,
            k,
            alpha,
            radii,
            sorted,
        }
    }

    /// Direct build: every reference row's K+1-th neighbor radius on `range`.
    pub fn build(reference: &Dataset, range: AttributeRange, k: usize, alpha: f64) -> Result<Self> {
        let radii = (0..reference.rows())
            .map(|i| kth_neighbor_radius(reference, range, reference.slice(i, range), k, alpha, Some(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_radii(range, k, alpha, radii))
    }

    /// Build for `alpha = 1` from the pairwise prefix-sum cache.
    pub fn from_cache(cache: &DistanceCache, range: AttributeRange, k: usize) -> Result<Self> {
        let range = AttributeRange::new(range.start, range.end, cache.dims())?;
        let n = cache.rows();
        if k == 0 || k >= n {
            return Err(Error::NeighborOutOfRange {
                k,
                available: n.saturating_sub(1),
            });
        }
        let mut dists = Vec::with_capacity(n - 1);
        let radii = (0..n)
            .map(|i| {
                dists.clear();
                dists.extend(
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| volume_distance(cache.volumes(i, j).expect("distinct rows"), range)),
                );
                kth_smallest(&mut dists, k)
            })
            .collect();
        Ok(Self::from_radii(range, k, 1.0, radii))
    }

    pub fn range(&self) -> AttributeRange {
        self.range
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn reference_rows(&self) -> usize {
        self.radii.len()
    }

    /// Radius of reference row `i` (K+1-th neighbor rule).
    pub fn radius(&self, i: usize) -> f64 {
        self.radii[i]
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn sorted_radii(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of reference radii `>= radius`; a multiple of `1 / N_s`.
    pub fn score_radius(&self, radius: f64) -> f64 {
        let below = self.sorted.partition_point(|&r| r < radius);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }

    /// Score of reference row `i` itself, used to rank imputation candidates.
    pub fn reference_score(&self, i: usize) -> f64 {
        self.score_radius(self.radii[i])
    }

    /// Score of an external query slice.
    pub fn score_query(&self, reference: &Dataset, query: &[f64]) -> Result<f64> {
        let r = kth_neighbor_radius(reference, self.range, query, self.k, self.alpha, None)?;
        Ok(self.score_radius(r))
    }
}

/// Score of `query` at the context's node under `params`.
pub fn score(ctx: &NodeScoreContext, reference: &Dataset, query: &[f64], params: &AnomalyParams) -> Result<f64> {
    if ctx.k != params.k_neighbors || ctx.alpha != params.alpha {
        return Err(Error::ContextMismatch {
            expected: format!("K={}, alpha={}", ctx.k, ctx.alpha),
            found: format!("K={}, alpha={}", params.k_neighbors, params.alpha),
        });
    }
    if ctx.reference_rows() != reference.rows() {
        return Err(Error::ContextMismatch {
            expected: format!("{} reference rows", ctx.reference_rows()),
            found: format!("{} reference rows", reference.rows()),
        });
    }
    ctx.score_query(reference, query)
}
