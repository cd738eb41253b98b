//! Subgroup error rates and their bootstrap summaries.

mod bootstrap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bootstrap::{
    bootstrap_estimate, bootstrap_with, fixed_bootstrap, resample_indices, BootstrapReport, LearnerReplicate,
    ReplicateModel, ReplicateRates,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    FNR,
    FPR,
    FDR,
    FOR,
    PPR,
}

impl Metric {
    pub const ERROR_RATES: [Metric; 4] = [Metric::FNR, Metric::FPR, Metric::FDR, Metric::FOR];
    pub const ALL: [Metric; 5] = [Metric::FNR, Metric::FPR, Metric::FDR, Metric::FOR, Metric::PPR];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::FNR => "FNR",
            Metric::FPR => "FPR",
            Metric::FDR => "FDR",
            Metric::FOR => "FOR",
            Metric::PPR => "PPR",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    #[inline]
    pub fn add(&mut self, y: u8, y_hat: u8) {
        match (y, y_hat) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (1, 0) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }
}

pub fn confusion(y: &[u8], y_hat: &[u8]) -> Result<ConfusionCounts> {
    if y.len() != y_hat.len() {
        return Err(Error::InvalidParameter(format!(
            "label length {} differs from decision length {}",
            y.len(),
            y_hat.len()
        )));
    }
    if y.iter().chain(y_hat).any(|&v| v > 1) {
        return Err(Error::InvalidParameter("labels and decisions must be 0 or 1".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&a, &b) in y.iter().zip(y_hat) {
        c.add(a, b);
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `None` when the denominator is empty.
pub fn rate(metric: Metric, c: &ConfusionCounts) -> Option<f64> {
    match metric {
        Metric::FNR => ratio(c.fn_, c.fn_ + c.tp),
        Metric::FPR => ratio(c.fp, c.fp + c.tn),
        Metric::FDR => ratio(c.fp, c.fp + c.tp),
        Metric::FOR => ratio(c.fn_, c.fn_ + c.tn),
        Metric::PPR => ratio(c.tp + c.fp, c.total()),
    }
}

pub const ALL_GROUP: &str = "ALL";

/// Bootstrap summary of one rate in one group. Interval fields are `None`
/// when no replicate defined the rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub condition: String,
    pub metric: Metric,
    pub group: String,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_replicates: usize,
    pub n_defined: usize,
}

/// `rate(group_a) - rate(group_b)`, differenced inside each replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDifference {
    pub condition: String,
    pub metric: Metric,
    pub group_a: String,
    pub group_b: String,
    pub delta_mean: Option<f64>,
    pub delta_ci_low: Option<f64>,
    pub delta_ci_high: Option<f64>,
    pub n_defined: usize,
}

impl GroupDifference {
    pub fn interval_excludes_zero(&self) -> bool {
        matches!((self.delta_ci_low, self.delta_ci_high), (Some(lo), Some(hi)) if lo > 0.0 || hi < 0.0)
    }

    pub fn interval_contains(&self, v: f64) -> bool {
        matches!((self.delta_ci_low, self.delta_ci_high), (Some(lo), Some(hi)) if lo <= v && v <= hi)
    }
}

/// Linear-interpolation quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and 2.5/97.5 percentile interval, clamped so the mean lies inside.
pub(crate) fn summarize(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, 0.025).min(mean);
    let hi = quantile_sorted(&sorted, 0.975).max(mean);
    Some((mean, lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_example() {
        let y = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let yh = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let c = confusion(&y, &yh).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 2,
                fp: 1,
                fn_: 1,
                tn: 6
            }
        );
        assert_eq!(rate(Metric::FNR, &c), Some(1.0 / 3.0));
        assert_eq!(rate(Metric::FPR, &c), Some(1.0 / 7.0));
        assert_eq!(rate(Metric::FDR, &c), Some(1.0 / 3.0));
        assert_eq!(rate(Metric::FOR, &c), Some(1.0 / 7.0));
    }

    #[test]
    fn degenerate_classifiers() {
        let y = [1, 0, 1, 0];
        let c = confusion(&y, &y).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        for m in Metric::ERROR_RATES {
            assert_eq!(rate(m, &c), Some(0.0));
        }
        let c = confusion(&y, &[1, 1, 1, 1]).unwrap();
        assert_eq!((c.tn, c.fn_), (0, 0));
        let c = confusion(&y, &[0, 0, 0, 0]).unwrap();
        assert_eq!(rate(Metric::FDR, &c), None);
    }

    #[test]
    fn length_mismatch() {
        assert!(confusion(&[1, 0], &[1]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert!((quantile_sorted(&v, 0.025) - 0.1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in proptest::collection::vec((0u8..2, 0u8..2), 0..100), rot in 0usize..100) {
            let (y, yh): (Vec<u8>, Vec<u8>) = pairs.iter().cloned().unzip();
            let mut p2 = pairs.clone();
            if !p2.is_empty() {
                let k = rot % p2.len();
                p2.rotate_left(k);
                p2.reverse();
            }
            let (y2, yh2): (Vec<u8>, Vec<u8>) = p2.into_iter().unzip();
            prop_assert_eq!(confusion(&y, &yh).unwrap(), confusion(&y2, &yh2).unwrap());
        }

        #[test]
        fn fnr_complements_tpr(pairs in proptest::collection::vec((0u8..2, 0u8..2), 1..100)) {
            let (y, yh): (Vec<u8>, Vec<u8>) = pairs.iter().cloned().unzip();
            let c = confusion(&y, &yh).unwrap();
            let pos = y.iter().filter(|&&v| v == 1).count();
            let hits = y.iter().zip(&yh).filter(|(&a, &b)| a == 1 && b == 1).count();
            match rate(Metric::FNR, &c) {
                Some(fnr) => prop_assert!((fnr + hits as f64 / pos as f64 - 1.0).abs() < 1e-12),
                None => prop_assert_eq!(pos, 0),
            }
        }
    }
}
