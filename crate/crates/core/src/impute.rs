//! Imputation of declared corrupted intervals.
//!
//! For a corrupted node the candidates are the reference rows nearest to the
//! instance on the sibling interval. The MAP rule fills the node with the
//! candidate that scores highest on the parent interval (its own attributes
//! on both halves, reference-row radius rule); the NN rule takes the nearest
//! candidate. Every filled interval is therefore a verbatim slice of a
//! reference row.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::check_alpha;
use crate::error::{invalid, Error, Result};
use crate::score::NodeScoreContext;
use crate::separate::{ranked_distances, QueryScan, ReferenceModel, SeparationResult};
use crate::tree::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImputeMethod {
    Map,
    Nn,
}

/// How many sibling-interval neighbors form the candidate set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborhoodSize {
    Fixed(usize),
    /// `ceil(gamma * sqrt(N_s))`.
    SqrtScaled { gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputeParams {
    pub neighborhood: NeighborhoodSize,
    /// `alpha` of the sibling-interval distance.
    pub alpha: f64,
    pub method: ImputeMethod,
}

impl ImputeParams {
    /// MAP with `K` neighbors and the separation `alpha`.
    pub fn matching(model: &ReferenceModel) -> Self {
        Self {
            neighborhood: NeighborhoodSize::Fixed(model.params().k_neighbors),
            alpha: model.params().alpha,
            method: ImputeMethod::Map,
        }
    }

    pub fn size_for(&self, reference_rows: usize) -> Result<usize> {
        let size = match self.neighborhood {
            NeighborhoodSize::Fixed(n) => n,
            NeighborhoodSize::SqrtScaled { gamma } => {
                if !(gamma > 0.0 && gamma.is_finite()) {
                    return Err(invalid("gamma", format!("{gamma} must be positive")));
                }
                (gamma * (reference_rows as f64).sqrt()).ceil() as usize
            }
        };
        if size == 0 || size > reference_rows {
            return Err(invalid(
                "neighborhood",
                format!("size {size} not in [1, {reference_rows}]"),
            ));
        }
        Ok(size)
    }

    pub fn validate(&self, reference_rows: usize) -> Result<()> {
        check_alpha(self.alpha)?;
        self.size_for(reference_rows).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputedInstance {
    pub values: Vec<f64>,
    /// Reference row used for each declared node.
    pub source_rows: BTreeMap<NodeId, usize>,
}

impl ImputedInstance {
    /// Audit trail keyed by root-relative node path.
    pub fn source_rows_by_path(&self) -> BTreeMap<String, usize> {
        self.source_rows.iter().map(|(n, &r)| (n.path(), r)).collect()
    }
}

/// Indices of the `size` smallest distances, ordered by (distance, row),
/// skipping `exclude`.
pub fn nearest_rows(distances: &[f64], size: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..distances.len()).filter(|&i| Some(i) != exclude).collect();
    let by = |a: &usize, b: &usize| distances[*a].total_cmp(&distances[*b]).then(a.cmp(b));
    if size < idx.len() {
        idx.select_nth_unstable_by(size, by);
        idx.truncate(size);
    }
    idx.sort_by(by);
    idx
}

/// Picks the source row among `candidates`: the nearest for NN, the highest
/// parent-interval reference score for MAP (smallest row index on ties).
pub fn select_source(parent: &NodeScoreContext, candidates: &[usize], method: ImputeMethod) -> Option<usize> {
    match method {
        ImputeMethod::Nn => candidates.first().copied(),
        ImputeMethod::Map => candidates.iter().copied().fold(None, |best, row| match best {
            None => Some(row),
            Some(b) => {
                let (sb, sr) = (parent.reference_score(b), parent.reference_score(row));
                if sr > sb || (sr == sb && row < b) {
                    Some(row)
                } else {
                    Some(b)
                }
            }
        }),
    }
}

/// Reference rows nearest to `x` on the sibling interval of `node`.
pub fn sibling_neighborhood(model: &ReferenceModel, x: &[f64], node: NodeId, params: &ImputeParams) -> Result<Vec<usize>> {
    let mut scan = QueryScan::new(model, x)?;
    neighborhood_in_scan(&mut scan, model, node, params)
}

fn neighborhood_in_scan(scan: &mut QueryScan<'_>, model: &ReferenceModel, node: NodeId, params: &ImputeParams) -> Result<Vec<usize>> {
    params.validate(model.reference().rows())?;
    let sibling = node.sibling().ok_or_else(|| Error::NoSibling(node.to_string()))?;
    if !model.tree().contains(sibling) {
        return Err(Error::NoSibling(node.to_string()));
    }
    let size = params.size_for(model.reference().rows())?;
    if params.alpha == model.params().alpha {
        Ok(nearest_rows(scan.distances(sibling), size, None))
    } else {
        let range = model.tree().range(sibling);
        let dists = ranked_distances(model.reference(), range, &scan.query()[range.start..range.end], params.alpha);
        Ok(nearest_rows(&dists, size, None))
    }
}

/// Replacement values for `node` and the chosen reference row.
pub fn map_impute_node(scan: &mut QueryScan<'_>, model: &ReferenceModel, node: NodeId, params: &ImputeParams) -> Result<(Vec<f64>, usize)> {
    let candidates = neighborhood_in_scan(scan, model, node, params)?;
    let parent = node.parent().ok_or_else(|| Error::NoSibling(node.to_string()))?;
    let row = select_source(model.context(parent), &candidates, params.method)
        .ok_or_else(|| invalid("neighborhood", "empty candidate set"))?;
    let range = model.tree().range(node);
    Ok((model.reference().slice(row, range).to_vec(), row))
}

fn impute_in_scan(scan: &mut QueryScan<'_>, model: &ReferenceModel, result: &SeparationResult, params: &ImputeParams) -> Result<ImputedInstance> {
    let mut values = scan.query().to_vec();
    let mut source_rows = BTreeMap::new();
    for &node in &result.declared {
        let (fill, row) = map_impute_node(scan, model, node, params)?;
        let range = model.tree().range(node);
        values[range.start..range.end].copy_from_slice(&fill);
        source_rows.insert(node, row);
    }
    Ok(ImputedInstance { values, source_rows })
}

/// `x` with each declared node's interval replaced.
pub fn impute(model: &ReferenceModel, x: &[f64], result: &SeparationResult, params: &ImputeParams) -> Result<ImputedInstance> {
    let mut scan = QueryScan::new(model, x)?;
    impute_in_scan(&mut scan, model, result, params)
}

/// Separation followed by imputation on one shared scan, so imputation
/// reuses the sibling distances already computed during the search.
pub fn separate_and_impute(model: &ReferenceModel, x: &[f64], params: &ImputeParams) -> Result<(SeparationResult, ImputedInstance)> {
    let mut scan = QueryScan::new(model, x)?;
    let result = scan.separate()?;
    let imputed = impute_in_scan(&mut scan, model, &result, params)?;
    Ok((result, imputed))
}

/// Same as [`separate_and_impute`] on an existing scan at a given `tau`.
pub fn separate_and_impute_at(scan: &mut QueryScan<'_>, model: &ReferenceModel, tau: f64, params: &ImputeParams) -> Result<(SeparationResult, ImputedInstance)> {
    let result = scan.separate_at(tau)?;
    let imputed = impute_in_scan(scan, model, &result, params)?;
    Ok((result, imputed))
}
