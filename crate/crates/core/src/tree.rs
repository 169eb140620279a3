//! Binary attribute-partitioning tree and the label-level decision logic of
//! the corruption search.
//!
//! Nodes use heap numbering: the root is 0 and node `i` has children
//! `2i + 1` and `2i + 2`. Splits are half-way with the floor on the left.
//!
//! [`decide`] is the single decision table. [`traverse`] drives it over any
//! labeler, so the data-driven search and the exhaustive false-alarm oracle
//! share exactly the same semantics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::AttributeRange;
use crate::error::{invalid, Error, Result};
use crate::score::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    pub fn left(self) -> NodeId {
        NodeId(2 * self.0 + 1)
    }

    pub fn right(self) -> NodeId {
        NodeId(2 * self.0 + 2)
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.0 > 0).then(|| NodeId((self.0 - 1) / 2))
    }

    pub fn sibling(self) -> Option<NodeId> {
        match self.0 {
            0 => None,
            i if i % 2 == 1 => Some(NodeId(i + 1)),
            i => Some(NodeId(i - 1)),
        }
    }

    pub fn is_root(self) -> bool {
        self.0 == 0
    }

    pub fn depth(self) -> usize {
        (usize::BITS - 1 - (self.0 + 1).leading_zeros()) as usize
    }

    /// Root-relative path such as `"LR"`; the root is `""`.
    pub fn path(self) -> String {
        let depth = self.depth();
        let pos = self.0 + 1 - (1 << depth);
        (0..depth)
            .rev()
            .map(|b| if pos >> b & 1 == 0 { 'L' } else { 'R' })
            .collect()
    }

    pub fn from_path(path: &str) -> Option<NodeId> {
        path.chars().try_fold(NodeId::ROOT, |node, c| match c {
            'L' => Some(node.left()),
            'R' => Some(node.right()),
            _ => None,
        })
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_root() {
            write!(f, "root")
        } else {
            write!(f, "{}", self.path())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTree {
    dims: usize,
    depth: usize,
    ranges: Vec<AttributeRange>,
}

impl PartitionTree {
    pub fn new(dims: usize, depth: usize) -> Result<Self> {
        if dims < 2 {
            return Err(invalid("dims", format!("{dims} attributes cannot be split")));
        }
        if depth < 1 {
            return Err(invalid("depth", "must be at least 1"));
        }
        if depth >= usize::BITS as usize || (1usize << depth) > dims {
            return Err(Error::DepthTooLarge { depth, dims });
        }
        let count = (1usize << (depth + 1)) - 1;
        let mut ranges = vec![AttributeRange::full(dims); count];
        for i in 0..(1usize << depth) - 1 {
            let r = ranges[i];
            let mid = r.start + r.len() / 2;
            ranges[2 * i + 1] = AttributeRange { start: r.start, end: mid };
            ranges[2 * i + 2] = AttributeRange { start: mid, end: r.end };
        }
        Ok(Self { dims, depth, ranges })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn node_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.ranges.len()).map(NodeId)
    }

    pub fn range(&self, node: NodeId) -> AttributeRange {
        self.ranges[node.0]
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.0 < self.ranges.len()
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        node.depth() == self.depth
    }

    pub fn children_are_leaves(&self, node: NodeId) -> bool {
        node.depth() + 1 == self.depth
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> {
        let first = (1usize << self.depth) - 1;
        (first..self.ranges.len()).map(NodeId)
    }

    /// Smallest leaf width; the ranked distance needs `floor(width * alpha) >= 1`.
    pub fn min_leaf_len(&self) -> usize {
        self.leaves().map(|n| self.range(n).len()).min().unwrap_or(0)
    }
}

pub fn build_partition(dims: usize, depth: usize) -> Result<PartitionTree> {
    PartitionTree::new(dims, depth)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeLabel {
    Anomalous,
    Normal,
    Unvisited,
}

impl From<Label> for NodeLabel {
    fn from(l: Label) -> Self {
        match l {
            Label::Anomalous => NodeLabel::Anomalous,
            Label::Normal => NodeLabel::Normal,
        }
    }
}

impl NodeLabel {
    fn visited(self) -> Result<Label> {
        match self {
            NodeLabel::Anomalous => Ok(Label::Anomalous),
            NodeLabel::Normal => Ok(Label::Normal),
            NodeLabel::Unvisited => Err(Error::Unvisited),
        }
    }
}

/// Label pattern of a parent and its two children.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    /// Anomalous parent, both children anomalous.
    Corruption,
    /// Anomalous parent, both children normal: an incompatible combination,
    /// not a corruption.
    Termination,
    ExploreRight,
    ExploreLeft,
    ExploreBoth,
    /// Normal parent.
    Clean,
}

impl Pattern {
    /// Traversal semantics: both mixed patterns explore both children.
    pub fn traversal(self) -> Pattern {
        match self {
            Pattern::ExploreLeft | Pattern::ExploreRight => Pattern::ExploreBoth,
            p => p,
        }
    }
}

pub fn classify_pattern(parent: NodeLabel, left: NodeLabel, right: NodeLabel) -> Result<Pattern> {
    let (parent, left, right) = (parent.visited()?, left.visited()?, right.visited()?);
    Ok(pattern_of(parent, left, right))
}

fn pattern_of(parent: Label, left: Label, right: Label) -> Pattern {
    use Label::*;
    match (parent, left, right) {
        (Normal, _, _) => Pattern::Clean,
        (Anomalous, Anomalous, Anomalous) => Pattern::Corruption,
        (Anomalous, Normal, Normal) => Pattern::Termination,
        (Anomalous, Normal, Anomalous) => Pattern::ExploreRight,
        (Anomalous, Anomalous, Normal) => Pattern::ExploreLeft,
    }
}

/// What the search does at a labeled node once both children are labeled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    /// Prune the branch without declaring anything.
    Stop,
    /// Declare the node's whole range corrupted and prune.
    DeclareNode,
    /// Children are leaves: declare the anomalous ones.
    DeclareChildren { left: bool, right: bool },
    /// Recurse into both children.
    Descend,
}

/// The decision table.
///
/// A corruption pattern declares at the node, except at the root where a
/// global anomaly is not localized: there the search continues below
/// without declaring. A termination pattern prunes. Otherwise the search
/// descends, and at parents of leaves any anomalous leaf is accepted.
pub fn decide(node: NodeId, children_are_leaves: bool, parent: Label, left: Label, right: Label) -> Step {
    let leaves = || Step::DeclareChildren {
        left: left.is_anomalous(),
        right: right.is_anomalous(),
    };
    match pattern_of(parent, left, right) {
        Pattern::Corruption if !node.is_root() => Step::DeclareNode,
        Pattern::Termination => Step::Stop,
        _ if children_are_leaves => leaves(),
        _ => Step::Descend,
    }
}

/// Labels visited and ranges declared by one search.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Traversal {
    pub labels: BTreeMap<NodeId, Label>,
    pub declared: Vec<NodeId>,
}

/// Depth-first search driven by [`decide`]. `labeler` is called once per
/// visited node, parents before children, left before right.
pub fn traverse<F>(tree: &PartitionTree, mut labeler: F) -> Result<Traversal>
where
    F: FnMut(NodeId) -> Result<Label>,
{
    let mut out = Traversal::default();
    let root = labeler(NodeId::ROOT)?;
    out.labels.insert(NodeId::ROOT, root);
    let mut stack = vec![NodeId::ROOT];
    while let Some(node) = stack.pop() {
        let parent = out.labels[&node];
        let (l, r) = (node.left(), node.right());
        let left = labeler(l)?;
        out.labels.insert(l, left);
        let right = labeler(r)?;
        out.labels.insert(r, right);
        match decide(node, tree.children_are_leaves(node), parent, left, right) {
            Step::Stop => {}
            Step::DeclareNode => out.declared.push(node),
            Step::DeclareChildren { left: dl, right: dr } => {
                if dl {
                    out.declared.push(l);
                }
                if dr {
                    out.declared.push(r);
                }
            }
            Step::Descend => {
                // Right pushed first so the left subtree is finished first.
                stack.push(r);
                stack.push(l);
            }
        }
    }
    Ok(out)
}
