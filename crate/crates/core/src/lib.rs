//! Detection, localization and imputation of localized corruptions in
//! vector data.
//!
//! An instance is split into nested attribute intervals by a binary
//! [`tree::PartitionTree`]. Every visited interval is tested against a clean
//! reference set with a kNN score whose false alarm rate is fixed at `tau`
//! ([`score`]). Label patterns over parent/child triples decide where a
//! corruption lies ([`separate`]); the affected intervals are then filled
//! from the reference row that is most typical on the parent interval among
//! the nearest rows on the sibling interval ([`impute`]). [`famodel`] gives
//! the whole-search false alarm rate under a tree-structured label model.

pub mod data;
pub mod distance;
pub mod error;
pub mod eval;
pub mod famodel;
pub mod impute;
pub mod score;
pub mod separate;
pub mod simulate;
pub mod tree;

pub use data::{AttributeRange, Dataset, ScalingParams};
pub use error::{Error, Result};
pub use famodel::{fa_bruteforce, fa_empirical, fa_recursion, FaModelParams};
pub use impute::{impute, separate_and_impute, ImputeMethod, ImputeParams, ImputedInstance, NeighborhoodSize};
pub use score::{AnomalyParams, Label, NodeScoreContext};
pub use separate::{tcs_separate, QueryScan, ReferenceModel, SeparationResult};
pub use tree::{NodeId, PartitionTree};
