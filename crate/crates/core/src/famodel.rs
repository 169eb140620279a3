//! Whole-search false alarm rate under a tree-structured label model.
//!
//! Node labels on a clean instance are modeled as a Bernoulli tree: the root
//! is anomalous with probability `tau`, and each child copies its parent with
//! weight `theta` or is drawn afresh with weight `1 - theta`. Every node is
//! then marginally anomalous with probability `tau`. `C_tau` is the
//! probability that the search declares anything.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::separate::{tcs_separate, ReferenceModel};
use crate::tree::{traverse, NodeId, PartitionTree};
use crate::score::Label;

/// Largest depth accepted by [`fa_bruteforce`].
pub const BRUTEFORCE_MAX_DEPTH: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaModelParams {
    pub tau: f64,
    /// Dependency between a node and each child; `theta[i]` applies to the
    /// edges from depth `i` to `i + 1`. A single entry is used at every depth.
    pub theta: Vec<f64>,
    pub depth: usize,
}

impl FaModelParams {
    pub fn uniform(tau: f64, theta: f64, depth: usize) -> Result<Self> {
        let p = Self {
            tau,
            theta: vec![theta],
            depth,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn per_depth(tau: f64, theta: Vec<f64>, depth: usize) -> Result<Self> {
        let p = Self { tau, theta, depth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(invalid("tau", format!("{} is not in [0, 1]", self.tau)));
        }
        if self.depth < 1 {
            return Err(invalid("depth", "must be at least 1"));
        }
        if self.theta.is_empty() || (self.theta.len() != 1 && self.theta.len() != self.depth) {
            return Err(invalid(
                "theta",
                format!("expected 1 or {} values, got {}", self.depth, self.theta.len()),
            ));
        }
        if let Some(t) = self.theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(invalid("theta", format!("{t} is not in [0, 1]")));
        }
        Ok(())
    }

    /// `theta` on the edges leaving depth `i`.
    pub fn theta_at(&self, i: usize) -> f64 {
        if self.theta.len() == 1 {
            self.theta[0]
        } else {
            self.theta[i]
        }
    }

    /// `q_u(v)` on the edges leaving depth `i`, signs `+1`/`-1`.
    fn q(&self, i: usize, u: i8, v: i8) -> f64 {
        child_conditional(self.theta_at(i), self.tau, u, v)
    }
}

/// `P(child = v | parent = u) = (1 - theta) P(v) + theta 1{u = v}` with
/// `P(+1) = tau`.
pub fn child_conditional(theta: f64, tau: f64, u_parent: i8, u_child: i8) -> f64 {
    let marginal = if u_child > 0 { tau } else { 1.0 - tau };
    let copy = if u_parent.signum() == u_child.signum() { 1.0 } else { 0.0 };
    (1.0 - theta) * marginal + theta * copy
}

/// `C_tau` from the bottom-up recursion over the probability `F(i; u)` that
/// the subtree below a depth-`i` node labeled `u` declares nothing.
pub fn fa_recursion(params: &FaModelParams) -> Result<f64> {
    params.validate()?;
    let l = params.depth;
    let tau = params.tau;
    if l == 1 {
        // The root is a parent of leaves; any anomalous leaf is declared.
        let f1 = params.q(0, 1, -1).powi(2);
        let fm = params.q(0, -1, -1).powi(2);
        return Ok(tau * (1.0 - f1) + (1.0 - tau) * (1.0 - fm));
    }
    let mut f_pos = params.q(l - 1, 1, -1).powi(2);
    let mut f_neg = params.q(l - 1, -1, -1).powi(2);
    for i in (0..l - 1).rev() {
        let (p1n, p1p) = (params.q(i, 1, -1), params.q(i, 1, 1));
        let (pnn, pnp) = (params.q(i, -1, -1), params.q(i, -1, 1));
        let mixed = f_pos * f_neg;
        let mut next_pos = p1n * p1n + 2.0 * p1n * p1p * mixed;
        if i == 0 {
            // An all-anomalous root is searched below rather than declared.
            next_pos += p1p * p1p * f_pos * f_pos;
        }
        let next_neg = pnp * pnp * f_pos * f_pos + pnn * pnn * f_neg * f_neg + 2.0 * pnp * pnn * mixed;
        f_pos = next_pos;
        f_neg = next_neg;
    }
    Ok(tau * (1.0 - f_pos) + (1.0 - tau) * (1.0 - f_neg))
}

/// `C_tau` by enumerating every labeling of the tree, running the search's
/// decision logic on the labels and summing the model probability of those
/// that declare a corruption.
pub fn fa_bruteforce(params: &FaModelParams) -> Result<f64> {
    params.validate()?;
    if params.depth > BRUTEFORCE_MAX_DEPTH {
        return Err(Error::DepthTooLarge {
            depth: params.depth,
            dims: 1 << params.depth,
        });
    }
    let tree = PartitionTree::new(1 << params.depth, params.depth)?;
    let nodes = tree.node_count();
    let total = 1u32 << nodes;
    let sign = |u: u32, n: usize| -> i8 {
        if u >> n & 1 == 1 {
            1
        } else {
            -1
        }
    };
    let mass = |u: u32| -> Result<f64> {
        let root = sign(u, 0);
        let mut p = if root > 0 { params.tau } else { 1.0 - params.tau };
        for n in 1..nodes {
            let id = NodeId(n);
            let parent = id.parent().expect("non-root").0;
            p *= params.q(id.depth() - 1, sign(u, parent), sign(u, n));
            if p == 0.0 {
                return Ok(0.0);
            }
        }
        let t = traverse(&tree, |id| Ok(Label::from_sign(sign(u, id.0))))?;
        Ok(if t.declared.is_empty() { 0.0 } else { p })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parts: Result<Vec<f64>> = (0..total).into_par_iter().map(mass).collect();
        Ok(parts?.iter().sum())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut sum = 0.0;
        for u in 0..total {
            sum += mass(u)?;
        }
        Ok(sum)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRate {
    pub rate: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Fraction of `holdout` rows on which the search detects a corruption,
/// with its binomial standard error.
pub fn fa_empirical(model: &ReferenceModel, holdout: &Dataset) -> Result<EmpiricalRate> {
    if holdout.is_empty() {
        return Err(Error::Empty);
    }
    let detect = |i: usize| tcs_separate(model, holdout.row(i)).map(|r| r.detected);
    #[cfg(feature = "parallel")]
    let flags: Vec<bool> = {
        use rayon::prelude::*;
        (0..holdout.rows()).into_par_iter().map(detect).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let flags: Vec<bool> = (0..holdout.rows()).map(detect).collect::<Result<_>>()?;
    let n = flags.len();
    let rate = flags.iter().filter(|&&f| f).count() as f64 / n as f64;
    Ok(EmpiricalRate {
        rate,
        std_error: (rate * (1.0 - rate) / n as f64).sqrt(),
        count: n,
    })
}
