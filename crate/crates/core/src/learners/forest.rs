use rand::Rng;
use rayon::prelude::*;

use super::cart::{grow_tree, ClassTree, GrowSettings, Sample};
use crate::design::Matrix;
use crate::rng::{self, tags};

/// Bagged trees; each tree sees a bootstrap of `rows` and ceil(sqrt(p))
/// candidate features per split.
pub fn fit(
    x: &Matrix,
    y: &[u8],
    rows: &[usize],
    class_weight: [f64; 2],
    n_trees: usize,
    min_samples_split: usize,
    seed: u64,
) -> Vec<ClassTree> {
    let max_features = (x.cols() as f64).sqrt().ceil() as usize;
    let settings = GrowSettings {
        max_depth: None,
        min_samples_split,
        max_features: Some(max_features.max(1)),
    };
    (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, tags::FOREST_TREE, t as u64);
            let mut counts = vec![0usize; rows.len()];
            for _ in 0..rows.len() {
                counts[rng.random_range(0..rows.len())] += 1;
            }
            let samples = rows
                .iter()
                .zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(&row, &c)| Sample {
                    row,
                    weight: class_weight[y[row] as usize] * c as f64,
                    count: c,
                })
                .collect();
            grow_tree(x, y, samples, settings, Some(&mut rng))
        })
        .collect()
}

pub fn predict(trees: &[ClassTree], row: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64
}
