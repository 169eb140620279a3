//! Tree-based corruption separation: per-node reference statistics, lazy
//! per-query node scoring, and the detection/localization search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeRange, Dataset};
use crate::distance::{prefix_volumes_into, ranked_count, ranked_distance_with, volume_distance, DistanceCache};
use crate::error::{invalid, Error, Result};
use crate::score::{is_anomalous, kth_smallest, AnomalyParams, Label, NodeScoreContext};
use crate::tree::{traverse, NodeId, PartitionTree, Traversal};

/// A clean reference set together with its partition tree and the sorted
/// K-th neighbor radii of every node. Immutable once built.
#[derive(Clone, Debug)]
pub struct ReferenceModel {
    reference: Dataset,
    tree: PartitionTree,
    params: AnomalyParams,
    contexts: Vec<NodeScoreContext>,
}

impl ReferenceModel {
    /// Computes every node's reference radii. With `alpha = 1` each row's
    /// pairwise prefix volumes are formed once and every node reads its
    /// interval distance from them; otherwise ranked distances are
    /// evaluated directly on each node slice.
    pub fn build(reference: Dataset, depth: usize, params: AnomalyParams) -> Result<Self> {
        let tree = PartitionTree::new(reference.dims(), depth)?;
        Self::check(&reference, &tree, &params)?;
        let n = reference.rows();
        let ranges: Vec<AttributeRange> = tree.nodes().map(|id| tree.range(id)).collect();
        let k = params.k_neighbors;
        let alpha = params.alpha;

        let per_row = |i: usize| -> Vec<f64> {
            let mut dists = Vec::with_capacity(n - 1);
            if alpha == 1.0 {
                let d = reference.dims();
                let mut vol = Vec::with_capacity(d + 1);
                let mut table = Vec::with_capacity((n - 1) * (d + 1));
                for j in (0..n).filter(|&j| j != i) {
                    prefix_volumes_into(reference.row(i), reference.row(j), &mut vol);
                    table.extend_from_slice(&vol);
                }
                ranges
                    .iter()
                    .map(|&r| {
                        dists.clear();
                        dists.extend(table.chunks_exact(d + 1).map(|v| volume_distance(v, r)));
                        kth_smallest(&mut dists, k)
                    })
                    .collect()
            } else {
                let mut scratch = Vec::new();
                ranges
                    .iter()
                    .map(|&r| {
                        let keep = ranked_count(r.len(), alpha);
                        let q = reference.slice(i, r);
                        dists.clear();
                        dists.extend(
                            (0..n)
                                .filter(|&j| j != i)
                                .map(|j| ranked_distance_with(q, reference.slice(j, r), keep, &mut scratch)),
                        );
                        kth_smallest(&mut dists, k)
                    })
                    .collect()
            }
        };

        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<f64>> = {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(per_row).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<f64>> = (0..n).map(per_row).collect();

        let contexts = ranges
            .iter()
            .enumerate()
            .map(|(node, &r)| {
                let radii = rows.iter().map(|row| row[node]).collect();
                NodeScoreContext::from_radii(r, k, alpha, radii)
            })
            .collect();
        Ok(Self {
            reference,
            tree,
            params,
            contexts,
        })
    }

    /// Builds the node radii from an explicit pairwise prefix-sum cache
    /// (`alpha = 1` only).
    pub fn from_cache(reference: Dataset, cache: &DistanceCache, depth: usize, params: AnomalyParams) -> Result<Self> {
        if params.alpha != 1.0 {
            return Err(invalid("alpha", "the prefix-sum cache only serves alpha = 1"));
        }
        if cache.rows() != reference.rows() || cache.dims() != reference.dims() {
            return Err(Error::ContextMismatch {
                expected: format!("{}x{} cache", reference.rows(), reference.dims()),
                found: format!("{}x{} cache", cache.rows(), cache.dims()),
            });
        }
        let tree = PartitionTree::new(reference.dims(), depth)?;
        Self::check(&reference, &tree, &params)?;
        let contexts = tree
            .nodes()
            .map(|id| NodeScoreContext::from_cache(cache, tree.range(id), params.k_neighbors))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            reference,
            tree,
            params,
            contexts,
        })
    }

    fn check(reference: &Dataset, tree: &PartitionTree, params: &AnomalyParams) -> Result<()> {
        params.validate_for(reference.rows())?;
        let min_leaf = tree.min_leaf_len();
        if ranked_count(min_leaf, params.alpha) == 0 {
            return Err(invalid(
                "alpha",
                format!("alpha = {} keeps no attribute on leaves of width {min_leaf}", params.alpha),
            ));
        }
        Ok(())
    }

    pub fn reference(&self) -> &Dataset {
        &self.reference
    }

    pub fn tree(&self) -> &PartitionTree {
        &self.tree
    }

    pub fn params(&self) -> &AnomalyParams {
        &self.params
    }

    pub fn context(&self, node: NodeId) -> &NodeScoreContext {
        &self.contexts[node.0]
    }

    /// Same radii, different `tau`; the radii do not depend on it.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let params = AnomalyParams::new(self.params.k_neighbors, tau, self.params.alpha)?;
        Ok(Self {
            params,
            ..self.clone()
        })
    }
}

/// Per-query state: node distances and scores are computed on first use
/// and reused by later searches (other `tau`) and by imputation.
#[derive(Debug)]
pub struct QueryScan<'m> {
    model: &'m ReferenceModel,
    query: Vec<f64>,
    volumes: Option<Vec<f64>>,
    distances: Vec<Option<Vec<f64>>>,
    scores: Vec<Option<f64>>,
    kernel_calls: usize,
}

impl<'m> QueryScan<'m> {
    pub fn new(model: &'m ReferenceModel, query: &[f64]) -> Result<Self> {
        if query.len() != model.reference.dims() {
            return Err(Error::LengthMismatch {
                left: query.len(),
                right: model.reference.dims(),
            });
        }
        if let Some(column) = query.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, column });
        }
        let nodes = model.tree.node_count();
        Ok(Self {
            model,
            query: query.to_vec(),
            volumes: None,
            distances: vec![None; nodes],
            scores: vec![None; nodes],
            kernel_calls: 0,
        })
    }

    pub fn query(&self) -> &[f64] {
        &self.query
    }

    /// Number of node-level distance vectors computed so far.
    pub fn kernel_calls(&self) -> usize {
        self.kernel_calls
    }

    /// Distances from the query to every reference row on `node`'s range
    /// under the model's `alpha`.
    pub fn distances(&mut self, node: NodeId) -> &[f64] {
        if self.distances[node.0].is_none() {
            let dists = self.compute_distances(node);
            self.distances[node.0] = Some(dists);
        }
        self.distances[node.0].as_deref().expect("just filled")
    }

    fn compute_distances(&mut self, node: NodeId) -> Vec<f64> {
        self.kernel_calls += 1;
        let model = self.model;
        let range = model.tree.range(node);
        let reference = &model.reference;
        let n = reference.rows();
        if model.params.alpha == 1.0 {
            let d = reference.dims();
            let query = &self.query;
            let volumes = self.volumes.get_or_insert_with(|| {
                let mut all = Vec::with_capacity(n * (d + 1));
                let mut row = Vec::with_capacity(d + 1);
                for j in 0..n {
                    prefix_volumes_into(query, reference.row(j), &mut row);
                    all.extend_from_slice(&row);
                }
                all
            });
            volumes.chunks_exact(d + 1).map(|v| volume_distance(v, range)).collect()
        } else {
            ranked_distances(reference, range, &self.query[range.start..range.end], model.params.alpha)
        }
    }

    /// Score of the query at `node`.
    pub fn score(&mut self, node: NodeId) -> f64 {
        if let Some(s) = self.scores[node.0] {
            return s;
        }
        let k = self.model.params.k_neighbors;
        let mut dists = self.distances(node).to_vec();
        let radius = kth_smallest(&mut dists, k);
        let s = self.model.contexts[node.0].score_radius(radius);
        self.scores[node.0] = Some(s);
        s
    }

    pub fn label(&mut self, node: NodeId, tau: f64) -> Label {
        is_anomalous(self.score(node), tau)
    }

    /// Runs the search with the model's `tau`.
    pub fn separate(&mut self) -> Result<SeparationResult> {
        let tau = self.model.params.tau;
        self.separate_at(tau)
    }

    /// Runs the search at an arbitrary `tau`, reusing cached scores.
    pub fn separate_at(&mut self, tau: f64) -> Result<SeparationResult> {
        let tree = &self.model.tree;
        let traversal = traverse(tree, |node| Ok(self.label(node, tau)))?;
        Ok(SeparationResult::from_traversal(tree, traversal))
    }
}

/// `h_alpha` from a query slice to every reference row on `range`.
pub(crate) fn ranked_distances(reference: &Dataset, range: AttributeRange, query: &[f64], alpha: f64) -> Vec<f64> {
    let keep = ranked_count(range.len(), alpha);
    let mut scratch = Vec::with_capacity(range.len());
    (0..reference.rows())
        .map(|j| ranked_distance_with(query, reference.slice(j, range), keep, &mut scratch))
        .collect()
}

/// Outcome of separating one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationResult {
    dims: usize,
    /// Corrupted attribute indices, ascending.
    pub corrupted: Vec<usize>,
    /// Nodes whose ranges were declared corrupted, in search order.
    pub declared: Vec<NodeId>,
    /// Labels of every visited node.
    pub labels: BTreeMap<NodeId, Label>,
    pub detected: bool,
}

impl SeparationResult {
    pub fn from_traversal(tree: &PartitionTree, traversal: Traversal) -> Self {
        assert!(
            traversal.declared.iter().all(|n| !n.is_root()),
            "the root range is never declared"
        );
        let mut corrupted: Vec<usize> = traversal
            .declared
            .iter()
            .flat_map(|&n| tree.range(n).indices())
            .collect();
        corrupted.sort_unstable();
        corrupted.dedup();
        Self {
            dims: tree.dims(),
            detected: !corrupted.is_empty(),
            corrupted,
            declared: traversal.declared,
            labels: traversal.labels,
        }
    }

    /// Result of a search that visited and declared nothing.
    pub fn nothing(dims: usize) -> Self {
        Self {
            dims,
            corrupted: Vec::new(),
            declared: Vec::new(),
            labels: BTreeMap::new(),
            detected: false,
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn node_label(&self, node: NodeId) -> crate::tree::NodeLabel {
        self.labels
            .get(&node)
            .map_or(crate::tree::NodeLabel::Unvisited, |&l| l.into())
    }

    /// `{"detected", "corrupted_attributes", "node_labels": {path: +-1}}`.
    pub fn to_wire(&self) -> SeparationWire {
        SeparationWire {
            detected: self.detected,
            corrupted_attributes: self.corrupted.clone(),
            node_labels: self.labels.iter().map(|(n, l)| (n.path(), l.sign())).collect(),
        }
    }
}

/// JSON form of a [`SeparationResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationWire {
    pub detected: bool,
    pub corrupted_attributes: Vec<usize>,
    pub node_labels: BTreeMap<String, i8>,
}

impl Serialize for SeparationResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_wire().serialize(serializer)
    }
}

pub fn tcs_separate(model: &ReferenceModel, x: &[f64]) -> Result<SeparationResult> {
    QueryScan::new(model, x)?.separate()
}

/// Per-attribute corrupted indicator.
pub fn localization_mask(result: &SeparationResult, dims: usize) -> Result<Vec<bool>> {
    if dims != result.dims {
        return Err(Error::LengthMismatch {
            left: dims,
            right: result.dims,
        });
    }
    let mut mask = vec![false; dims];
    for &a in &result.corrupted {
        *mask.get_mut(a).ok_or(Error::InvalidRange {
            start: a,
            end: a + 1,
            dims,
        })? = true;
    }
    Ok(mask)
}
