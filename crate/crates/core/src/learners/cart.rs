//! Weighted-Gini classification trees.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        /// Weighted positive fraction.
        prob: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in pre-order; node 0 is the root. `x <= threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTree {
    pub nodes: Vec<TreeNode>,
}

impl ClassTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                TreeNode::Leaf { prob, .. } => return *prob,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(t: &ClassTree, k: usize) -> usize {
            match &t.nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GrowSettings {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all.
    pub max_features: Option<usize>,
}

/// Training sample: a row with its total weight and multiplicity.
#[derive(Clone, Copy, Debug)]
pub struct Sample {
    pub row: usize,
    pub weight: f64,
    pub count: usize,
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    settings: GrowSettings,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<TreeNode>,
    buf: Vec<(f64, usize)>,
    feature_order: Vec<usize>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

impl Grower<'_> {
    fn grow(&mut self, samples: &mut [Sample], depth: usize) -> usize {
        let (mut pos, mut total, mut count) = (0.0, 0.0, 0usize);
        for s in samples.iter() {
            total += s.weight;
            count += s.count;
            if self.y[s.row] == 1 {
                pos += s.weight;
            }
        }
        let id = self.nodes.len();
        let prob = if total > 0.0 { pos / total } else { 0.0 };
        self.nodes.push(TreeNode::Leaf { prob, samples: count });

        let pure = pos <= 0.0 || pos >= total;
        let depth_reached = self.settings.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || count < self.settings.min_samples_split {
            return id;
        }
        let Some(best) = self.best_split(samples, pos, total) else {
            return id;
        };
        let mid = partition(samples, |s| self.x.get(s.row, best.feature) <= best.threshold);
        let (left_s, right_s) = samples.split_at_mut(mid);
        let left = self.grow(left_s, depth + 1);
        let right = self.grow(right_s, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn best_split(&mut self, samples: &[Sample], pos: f64, total: f64) -> Option<Best> {
        let p = self.x.cols();
        let parent = total * gini(pos, total);
        self.feature_order.clear();
        self.feature_order.extend(0..p);
        let budget = match (self.settings.max_features, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) => {
                self.feature_order.shuffle(rng);
                k.min(p)
            }
            _ => p,
        };
        let mut best: Option<Best> = None;
        let mut informative = 0;
        for fi in 0..p {
            if informative >= budget {
                break;
            }
            let f = self.feature_order[fi];
            self.buf.clear();
            self.buf
                .extend(samples.iter().enumerate().map(|(k, s)| (self.x.get(s.row, f), k)));
            self.buf.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.buf[0].0 == self.buf[self.buf.len() - 1].0 {
                continue;
            }
            informative += 1;
            let (mut lpos, mut ltot) = (0.0, 0.0);
            for k in 0..self.buf.len() - 1 {
                let s = &samples[self.buf[k].1];
                ltot += s.weight;
                if self.y[s.row] == 1 {
                    lpos += s.weight;
                }
                let (a, b) = (self.buf[k].0, self.buf[k + 1].0);
                if a == b {
                    continue;
                }
                let rtot = total - ltot;
                let rpos = pos - lpos;
                let gain = parent - ltot * gini(lpos, ltot) - rtot * gini(rpos, rtot);
                if best.as_ref().is_none_or(|bb| gain > bb.gain) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// In-place stable-enough partition; returns the count satisfying `pred`.
fn partition(samples: &mut [Sample], pred: impl Fn(&Sample) -> bool) -> usize {
    let mut left: Vec<Sample> = Vec::with_capacity(samples.len());
    let mut right: Vec<Sample> = Vec::new();
    for s in samples.iter() {
        if pred(s) {
            left.push(*s);
        } else {
            right.push(*s);
        }
    }
    let mid = left.len();
    samples[..mid].copy_from_slice(&left);
    samples[mid..].copy_from_slice(&right);
    mid
}

pub fn grow_tree(
    x: &Matrix,
    y: &[u8],
    mut samples: Vec<Sample>,
    settings: GrowSettings,
    rng: Option<&mut ChaCha8Rng>,
) -> ClassTree {
    let mut g = Grower {
        x,
        y,
        settings,
        rng,
        nodes: Vec::new(),
        buf: Vec::with_capacity(samples.len()),
        feature_order: Vec::with_capacity(x.cols()),
    };
    g.grow(&mut samples, 0);
    ClassTree { nodes: g.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(rows: usize) -> Vec<Sample> {
        (0..rows)
            .map(|row| Sample {
                row,
                weight: 1.0,
                count: 1,
            })
            .collect()
    }

    #[test]
    fn splits_step_at_midpoint() {
        let x = Matrix::from_rows(&[vec![0.1], vec![0.2], vec![0.7], vec![0.9]]);
        let y = [0, 0, 1, 1];
        let settings = GrowSettings {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        };
        let t = grow_tree(&x, &y, unit(4), settings, None);
        match &t.nodes[0] {
            TreeNode::Split { threshold, .. } => assert!((threshold - 0.45).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(&[0.0]), 0.0);
        assert_eq!(t.predict(&[1.0]), 1.0);
    }

    #[test]
    fn weights_shift_leaf_probability() {
        let x = Matrix::from_rows(&[vec![0.5], vec![0.5]]);
        let y = [0, 1];
        let samples = vec![
            Sample {
                row: 0,
                weight: 1.0,
                count: 1,
            },
            Sample {
                row: 1,
                weight: 3.0,
                count: 1,
            },
        ];
        let settings = GrowSettings {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        };
        let t = grow_tree(&x, &y, samples, settings, None);
        assert_eq!(t.nodes.len(), 1);
        assert!((t.predict(&[0.5]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn depth_limit_holds() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..64).map(|i| (i % 2) as u8).collect();
        let x = Matrix::from_rows(&rows);
        for d in 1..5 {
            let settings = GrowSettings {
                max_depth: Some(d),
                min_samples_split: 2,
                max_features: None,
            };
            let t = grow_tree(&x, &y, unit(64), settings, None);
            assert!(t.depth() <= d);
        }
    }
}
