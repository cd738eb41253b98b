use std::collections::BTreeSet;

use ordered_float::OrderedFloat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PropensityModel;
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// 1-to-1 matches without replacement. Indices are dataset rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedSample {
    /// (treated row, control row, |score gap|)
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_treated: Vec<usize>,
    pub caliper: f64,
    pub unmatched_fraction: f64,
}

impl MatchedSample {
    /// Treated rows then control rows of every pair.
    pub fn rows(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.pairs.iter().map(|p| p.0).collect();
        rows.extend(self.pairs.iter().map(|p| p.1));
        rows
    }

    /// CSV with header `treated,control,gap`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("treated,control,gap\n");
        for (t, c, g) in &self.pairs {
            out.push_str(&format!("{t},{c},{g}\n"));
        }
        out
    }
}

/// Greedy nearest-neighbour matching. Treated units are visited in
/// descending score order (seeded tie-break) and each takes the closest
/// unused control; a treated unit whose closest control lies outside the
/// caliper stays unmatched.
pub fn match_scores(
    treated: &[(usize, f64)],
    controls: &[(usize, f64)],
    caliper: f64,
    seed: u64,
) -> Result<MatchedSample> {
    if !(caliper > 0.0 && caliper <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "caliper must lie in (0,1], got {caliper}"
        )));
    }
    if treated.is_empty() || controls.is_empty() {
        return Err(Error::Data(format!(
            "matching needs treated and control units, got {} and {}",
            treated.len(),
            controls.len()
        )));
    }
    let mut rng = rng::stream(seed, tags::MATCH, 0);
    let mut order: Vec<(usize, f64, u64)> = treated.iter().map(|&(r, s)| (r, s, rng.random())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));

    let mut pool: BTreeSet<(OrderedFloat<f64>, usize)> = controls.iter().map(|&(r, s)| (OrderedFloat(s), r)).collect();
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for (row, score, _) in order {
        let key = (OrderedFloat(score), 0usize);
        let below = pool.range(..key).next_back().copied();
        let above = pool.range(key..).next().copied();
        let nearest = match (below, above) {
            (Some(b), Some(a)) => {
                if score - b.0 .0 <= a.0 .0 - score {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        };
        match nearest {
            Some(c) if (c.0 .0 - score).abs() <= caliper => {
                pool.remove(&c);
                pairs.push((row, c.1, (c.0 .0 - score).abs()));
            }
            _ => unmatched.push(row),
        }
    }
    let unmatched_fraction = unmatched.len() as f64 / treated.len() as f64;
    Ok(MatchedSample {
        pairs,
        unmatched_treated: unmatched,
        caliper,
        unmatched_fraction,
    })
}

pub fn match_caliper(model: &PropensityModel, caliper: f64, seed: u64) -> Result<MatchedSample> {
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    for ((&row, &t), &s) in model.rows.iter().zip(&model.treated).zip(&model.scores) {
        if t {
            treated.push((row, s));
        } else {
            controls.push((row, s));
        }
    }
    match_scores(&treated, &controls, caliper, seed)
}
