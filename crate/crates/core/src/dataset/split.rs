use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// Seeded random partition into (train, test). Each side keeps the
/// original row order.
pub fn split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must lie in (0,1), got {test_fraction}"
        )));
    }
    let m = data.n_rows();
    if m < 2 {
        return Err(Error::Data(format!("cannot split {m} record(s)")));
    }
    let n_test = ((m as f64 * test_fraction).round() as usize).clamp(1, m - 1);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng::stream(seed, tags::SPLIT, 0));
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.select_rows(&train), data.select_rows(&test)))
}
