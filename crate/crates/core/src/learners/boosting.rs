//! Gradient-boosted depth-one trees on the weighted logistic loss.

use serde::{Deserialize, Serialize};

use super::logistic::sigmoid;
use crate::design::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    #[inline]
    pub fn score(&self, row: &[f64]) -> f64 {
        if row[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub base_score: f64,
    pub stumps: Vec<Stump>,
}

impl StumpEnsemble {
    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.base_score + self.stumps.iter().map(|s| s.score(row)).sum::<f64>())
    }
}

fn weighted_loss(scores: &[f64], labels: &[f64], weights: &[f64], total: f64) -> f64 {
    let mut loss = 0.0;
    for ((&f, &y), &w) in scores.iter().zip(labels).zip(weights) {
        let sp = if f > 0.0 {
            f + (-f).exp().ln_1p()
        } else {
            f.exp().ln_1p()
        };
        loss += w * (sp - y * f);
    }
    loss / total
}

/// Fits `n_rounds` stumps; returns the ensemble and the weighted training
/// loss after initialisation and after each round.
pub fn fit(
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    class_weight: [f64; 2],
    n_rounds: usize,
    shrinkage: f64,
) -> (StumpEnsemble, Vec<f64>) {
    let n = rows.len();
    let labels: Vec<f64> = rows.iter().map(|&r| f64::from(y[r])).collect();
    let weights: Vec<f64> = rows.iter().map(|&r| class_weight[y[r] as usize]).collect();
    let total: f64 = weights.iter().sum();
    let wpos: f64 = weights.iter().zip(&labels).map(|(w, y)| w * y).sum();
    let base_score = (wpos / (total - wpos)).ln();

    // Sample order per feature, fixed across rounds.
    let orders: Vec<Vec<usize>> = (0..x.cols())
        .map(|f| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x.get(rows[a], f).total_cmp(&x.get(rows[b], f)).then(a.cmp(&b)));
            o
        })
        .collect();

    let mut scores = vec![base_score; n];
    let mut trace = vec![weighted_loss(&scores, &labels, &weights, total)];
    let mut stumps = Vec::with_capacity(n_rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    const EPS: f64 = 1e-12;

    for _ in 0..n_rounds {
        let (mut g_all, mut h_all) = (0.0, 0.0);
        for k in 0..n {
            let p = sigmoid(scores[k]);
            grad[k] = weights[k] * (p - labels[k]);
            hess[k] = weights[k] * p * (1.0 - p);
            g_all += grad[k];
            h_all += hess[k];
        }
        let mut best: Option<(f64, usize, f64, f64, f64, f64, f64)> = None;
        for (f, order) in orders.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..n - 1 {
                let k = order[i];
                gl += grad[k];
                hl += hess[k];
                let a = x.get(rows[k], f);
                let b = x.get(rows[order[i + 1]], f);
                if a == b {
                    continue;
                }
                let (gr, hr) = (g_all - gl, h_all - hl);
                let gain = gl * gl / (hl + EPS) + gr * gr / (hr + EPS);
                if best.is_none_or(|bb| gain > bb.0) {
                    let mut t = 0.5 * (a + b);
                    if t >= b {
                        t = a;
                    }
                    best = Some((gain, f, t, gl, hl, gr, hr));
                }
            }
        }
        let Some((_, feature, threshold, gl, hl, gr, hr)) = best else {
            break;
        };
        let mut stump = Stump {
            feature,
            threshold,
            left: -shrinkage * gl / (hl + EPS),
            right: -shrinkage * gr / (hr + EPS),
        };
        let before = *trace.last().unwrap();
        let mut trial = vec![0.0; n];
        let mut after = f64::INFINITY;
        // Halve the step until the loss does not increase.
        for _ in 0..50 {
            for k in 0..n {
                trial[k] = scores[k] + stump.score(x.row(rows[k]));
            }
            after = weighted_loss(&trial, &labels, &weights, total);
            if after <= before {
                break;
            }
            stump.left *= 0.5;
            stump.right *= 0.5;
        }
        if after > before {
            break;
        }
        scores = trial;
        trace.push(after);
        stumps.push(stump);
    }
    (StumpEnsemble { base_score, stumps }, trace)
}
