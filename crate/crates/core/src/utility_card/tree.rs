//! Squared-error regression tree with minimum node sizes and
//! cost-complexity (weakest-link) pruning.

use serde::{Deserialize, Serialize};

use super::UtilityRecords;
use crate::design::{FeatureSource, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSettings {
    pub min_split: usize,
    pub min_leaf: usize,
    /// Prune at the `alpha_rank`-th largest distinct value of the α path.
    pub alpha_rank: usize,
}

impl Default for TreeSettings {
    fn default() -> Self {
        TreeSettings {
            min_split: 50,
            min_leaf: 50,
            alpha_rank: 5,
        }
    }
}

/// `value` is the mean target of the node's members; internal nodes send
/// `x[feature] <= threshold` left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityNode {
    pub value: f64,
    pub n: usize,
    pub sum: f64,
    pub sse: f64,
    pub split: Option<(usize, f64, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityTree {
    pub features: Vec<FeatureSource>,
    /// Node 0 is the root.
    pub nodes: Vec<UtilityNode>,
    pub alpha: f64,
    /// Distinct α values of the pruning path, ascending.
    pub alpha_path: Vec<f64>,
    pub unpruned_nodes: usize,
    pub notes: Vec<String>,
}

impl UtilityTree {
    pub fn leaves(&self) -> impl Iterator<Item = &UtilityNode> {
        self.nodes.iter().filter(|n| n.split.is_none())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn sse(&self) -> f64 {
        self.leaves().map(|n| n.sse).sum()
    }

    /// Cost-complexity objective: leaf SSE over the root count plus
    /// `alpha` per leaf.
    pub fn cost(&self, alpha: f64) -> f64 {
        self.sse() / self.nodes[0].n as f64 + alpha * self.n_leaves() as f64
    }

    /// Further weakest-link pruning of this tree at `alpha`.
    pub fn pruned(&self, alpha: f64) -> UtilityTree {
        UtilityTree {
            nodes: prune(&self.nodes, alpha),
            alpha,
            ..self.clone()
        }
    }

    /// Leaf value for one feature row.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        while let Some((f, t, l, r)) = self.nodes[i].split {
            i = if row[f] <= t { l } else { r };
        }
        self.nodes[i].value
    }
}

fn stats(y: &[f64], idx: &[usize]) -> (f64, f64) {
    let sum: f64 = idx.iter().map(|&i| y[i]).sum();
    let mean = sum / idx.len() as f64;
    let sse = idx.iter().map(|&i| (y[i] - mean).powi(2)).sum();
    (sum, sse)
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    settings: TreeSettings,
    nodes: Vec<UtilityNode>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let (sum, sse) = stats(self.y, &idx);
        let id = self.nodes.len();
        self.nodes.push(UtilityNode {
            value: sum / idx.len() as f64,
            n: idx.len(),
            sum,
            sse,
            split: None,
        });
        if idx.len() < self.settings.min_split
            || idx.len() < 2 * self.settings.min_leaf
            || sse <= 1e-12 * idx.len() as f64
        {
            return id;
        }
        let Some((f, t)) = self.best_split(&idx) else { return id };
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x.get(i, f) <= t);
        let l = self.grow(left);
        let r = self.grow(right);
        self.nodes[id].split = Some((f, t, l, r));
        id
    }

    /// Lowest child SSE over all features and midpoints; first found wins
    /// ties.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let min_leaf = self.settings.min_leaf.max(1);
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let total_sq: f64 = idx.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in 0..self.x.cols() {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            let (mut s, mut sq) = (0.0, 0.0);
            for k in 0..n - 1 {
                let v = self.y[order[k]];
                s += v;
                sq += v * v;
                let nl = k + 1;
                let (xa, xb) = (self.x.get(order[k], f), self.x.get(order[k + 1], f));
                if nl < min_leaf || n - nl < min_leaf || xa == xb {
                    continue;
                }
                let nr = (n - nl) as f64;
                let sse = (sq - s * s / nl as f64) + ((total_sq - sq) - (total - s).powi(2) / nr);
                if best.is_none_or(|b| sse < b.0) {
                    best = Some((sse, f, xa + (xb - xa) / 2.0));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn leaf_stats(nodes: &[UtilityNode], collapsed: &[bool], t: usize) -> (f64, usize) {
    match nodes[t].split {
        Some((_, _, l, r)) if !collapsed[t] => {
            let (a, na) = leaf_stats(nodes, collapsed, l);
            let (b, nb) = leaf_stats(nodes, collapsed, r);
            (a + b, na + nb)
        }
        _ => (nodes[t].sse, 1),
    }
}

/// Weakest link among live internal nodes: (node, effective α), with
/// impurity measured as SSE over the root count.
fn weakest_link(nodes: &[UtilityNode], collapsed: &[bool]) -> Option<(usize, f64)> {
    let total = nodes[0].n as f64;
    let mut best: Option<(usize, f64)> = None;
    let mut stack = vec![0];
    while let Some(t) = stack.pop() {
        let Some((_, _, l, r)) = nodes[t].split else { continue };
        if collapsed[t] {
            continue;
        }
        let (sub_sse, leaves) = leaf_stats(nodes, collapsed, t);
        let alpha = (nodes[t].sse - sub_sse) / total / (leaves - 1) as f64;
        if best.is_none_or(|b| alpha < b.1 || (alpha == b.1 && t < b.0)) {
            best = Some((t, alpha));
        }
        stack.push(r);
        stack.push(l);
    }
    best
}

/// α values at which successive weakest links collapse, starting at 0 for
/// the unpruned tree.
fn alpha_path(nodes: &[UtilityNode]) -> Vec<f64> {
    let mut collapsed = vec![false; nodes.len()];
    let mut path = vec![0.0];
    while let Some((t, a)) = weakest_link(nodes, &collapsed) {
        collapsed[t] = true;
        path.push(a.max(0.0));
    }
    path
}

fn same_alpha(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn prune(nodes: &[UtilityNode], alpha: f64) -> Vec<UtilityNode> {
    let mut collapsed = vec![false; nodes.len()];
    while let Some((t, a)) = weakest_link(nodes, &collapsed) {
        if a > alpha && !same_alpha(a, alpha) {
            break;
        }
        collapsed[t] = true;
    }
    let mut out = Vec::new();
    copy_live(nodes, &collapsed, 0, &mut out);
    out
}

fn copy_live(nodes: &[UtilityNode], collapsed: &[bool], t: usize, out: &mut Vec<UtilityNode>) -> usize {
    let id = out.len();
    let mut node = nodes[t].clone();
    node.split = None;
    out.push(node);
    if let Some((f, th, l, r)) = nodes[t].split {
        if !collapsed[t] {
            let nl = copy_live(nodes, collapsed, l, out);
            let nr = copy_live(nodes, collapsed, r, out);
            out[id].split = Some((f, th, nl, nr));
        }
    }
    id
}

/// Grows the tree on `target`, then prunes at the configured rank of the
/// α path.
pub fn fit_regression_tree(
    x: &Matrix,
    target: &[f64],
    features: Vec<FeatureSource>,
    settings: TreeSettings,
) -> Result<UtilityTree> {
    if settings.alpha_rank == 0 {
        return Err(Error::InvalidParameter("alpha rank starts at 1".into()));
    }
    if x.rows() != target.len() || features.len() != x.cols() {
        return Err(Error::InvalidParameter("tree inputs are not aligned".into()));
    }
    if target.len() < settings.min_split.max(1) {
        return Err(Error::Data(format!(
            "{} records is fewer than the minimum split size {}",
            target.len(),
            settings.min_split
        )));
    }
    let mut grower = Grower {
        x,
        y: target,
        settings,
        nodes: Vec::new(),
    };
    grower.grow((0..target.len()).collect());
    let full = grower.nodes;

    let mut distinct: Vec<f64> = Vec::new();
    let mut raw = alpha_path(&full);
    raw.sort_by(f64::total_cmp);
    for a in raw {
        if distinct.last().is_none_or(|&l| !same_alpha(l, a)) {
            distinct.push(a);
        }
    }
    let mut notes = Vec::new();
    let alpha = if settings.alpha_rank <= distinct.len() {
        distinct[distinct.len() - settings.alpha_rank]
    } else {
        notes.push(format!(
            "α path has {} distinct values, fewer than rank {}; used the largest",
            distinct.len(),
            settings.alpha_rank
        ));
        *distinct.last().expect("path starts at 0")
    };
    Ok(UtilityTree {
        features,
        nodes: prune(&full, alpha),
        alpha,
        alpha_path: distinct,
        unpruned_nodes: full.len(),
        notes,
    })
}

pub fn fit_utility_tree(records: &UtilityRecords, settings: TreeSettings) -> Result<UtilityTree> {
    fit_regression_tree(&records.x, &records.diffs(), records.features.clone(), settings)
}
