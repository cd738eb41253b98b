//! Out-of-bag bootstrap: resample, refit, evaluate on the rows left out.

use rand::Rng;
use rayon::prelude::*;

use super::{rate, summarize, ConfusionCounts, GroupDifference, Metric, MetricEstimate, ALL_GROUP};
use crate::dataset::{Contrast, Dataset};
use crate::design::{ColumnSelection, DesignEncoder, Matrix};
use crate::error::{Error, Result};
use crate::learners::{fit_rows, LearnerSpec};
use crate::rng::{self, derive_seed, tags};
use serde::{Deserialize, Serialize};

/// Something that can be refit on a resample and asked for decisions.
pub trait ReplicateModel: Sync {
    /// Fits on `in_bag` (rows may repeat) and returns 0/1 decisions for
    /// each row of `eval`.
    fn fit_predict(&self, in_bag: &[usize], eval: &[usize], seed: u64) -> Result<Vec<u8>>;
}

/// A learner on a pre-encoded design matrix.
pub struct LearnerReplicate {
    spec: LearnerSpec,
    x: Matrix,
    y: Vec<u8>,
    threshold: f64,
}

impl LearnerReplicate {
    pub fn new(spec: &LearnerSpec, data: &Dataset, include_sensitive: bool) -> Result<Self> {
        let encoder = DesignEncoder::build(data, &ColumnSelection::all(include_sensitive))?;
        Ok(LearnerReplicate {
            spec: *spec,
            x: encoder.encode(data)?,
            y: data.labels().to_vec(),
            threshold: spec.decision_threshold(),
        })
    }
}

impl ReplicateModel for LearnerReplicate {
    fn fit_predict(&self, in_bag: &[usize], eval: &[usize], seed: u64) -> Result<Vec<u8>> {
        let params = fit_rows(&self.spec.with_seed(seed), &self.x, &self.y, in_bag)?;
        Ok(eval
            .iter()
            .map(|&r| u8::from(params.predict_row(self.x.row(r)) >= self.threshold))
            .collect())
    }
}

/// Row indices drawn with replacement for replicate `r`; independent of how
/// many replicates are run.
pub fn resample_indices(seed: u64, replicate: usize, m: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, tags::BOOTSTRAP, replicate as u64);
    (0..m).map(|_| rng.random_range(0..m)).collect()
}

/// Per-replicate rates, indexed `[replicate][group][metric]`. Groups are
/// ALL, treated, control.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRates {
    pub groups: Vec<String>,
    pub metrics: Vec<Metric>,
    pub rates: Vec<Vec<Vec<Option<f64>>>>,
    /// Evaluated-row count per replicate and group.
    pub group_sizes: Vec<Vec<usize>>,
}

impl ReplicateRates {
    pub fn group_index(&self, group: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == group)
    }

    /// Replicate-wise `rate(a) - rate(b)`; `None` where either is undefined.
    pub fn deltas(&self, metric: Metric, a: usize, b: usize) -> Vec<Option<f64>> {
        let m = self
            .metrics
            .iter()
            .position(|&x| x == metric)
            .expect("metric evaluated");
        self.rates
            .iter()
            .map(|r| match (r[a][m], r[b][m]) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            })
            .collect()
    }

    pub fn summarize(&self, condition: &str) -> (Vec<MetricEstimate>, Vec<GroupDifference>) {
        let n_rep = self.rates.len();
        let mut estimates = Vec::new();
        for (g, group) in self.groups.iter().enumerate() {
            for (m, &metric) in self.metrics.iter().enumerate() {
                let vals: Vec<f64> = self.rates.iter().filter_map(|r| r[g][m]).collect();
                let s = summarize(&vals);
                estimates.push(MetricEstimate {
                    condition: condition.to_string(),
                    metric,
                    group: group.clone(),
                    mean: s.map(|t| t.0),
                    ci_low: s.map(|t| t.1),
                    ci_high: s.map(|t| t.2),
                    n_replicates: n_rep,
                    n_defined: vals.len(),
                });
            }
        }
        let mut differences = Vec::new();
        if self.groups.len() == 3 {
            for &metric in &self.metrics {
                let vals: Vec<f64> = self.deltas(metric, 1, 2).into_iter().flatten().collect();
                let s = summarize(&vals);
                differences.push(GroupDifference {
                    condition: condition.to_string(),
                    metric,
                    group_a: self.groups[1].clone(),
                    group_b: self.groups[2].clone(),
                    delta_mean: s.map(|t| t.0),
                    delta_ci_low: s.map(|t| t.1),
                    delta_ci_high: s.map(|t| t.2),
                    n_defined: vals.len(),
                });
            }
        }
        (estimates, differences)
    }
}

fn group_rates(
    labels: &[u8],
    membership: &[Option<bool>],
    rows: &[usize],
    decisions: &[u8],
    metrics: &[Metric],
) -> (Vec<Vec<Option<f64>>>, Vec<usize>) {
    let mut counts = [ConfusionCounts::default(); 3];
    for (&r, &d) in rows.iter().zip(decisions) {
        counts[0].add(labels[r], d);
        match membership[r] {
            Some(true) => counts[1].add(labels[r], d),
            Some(false) => counts[2].add(labels[r], d),
            None => {}
        }
    }
    let rates = counts
        .iter()
        .map(|c| {
            if c.total() == 0 {
                vec![None; metrics.len()]
            } else {
                metrics.iter().map(|&m| rate(m, c)).collect()
            }
        })
        .collect();
    (rates, counts.iter().map(|c| c.total() as usize).collect())
}

fn group_names(contrast: &Contrast) -> Vec<String> {
    vec![
        ALL_GROUP.to_string(),
        contrast.treated_label(),
        contrast.control_label(),
    ]
}

fn check_groups(rates: &ReplicateRates) -> Result<()> {
    for g in 1..rates.groups.len() {
        if rates.group_sizes.iter().all(|s| s[g] == 0) {
            return Err(Error::MissingGroup(rates.groups[g].clone()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub mean_oob_fraction: f64,
    pub estimates: Vec<MetricEstimate>,
    pub differences: Vec<GroupDifference>,
}

/// OOB bootstrap over any refittable model. Replicates run in parallel and
/// are merged by index.
pub fn bootstrap_with(
    model: &dyn ReplicateModel,
    labels: &[u8],
    membership: &[Option<bool>],
    contrast: &Contrast,
    metrics: &[Metric],
    replicates: usize,
    seed: u64,
) -> Result<(ReplicateRates, Vec<f64>)> {
    if replicates < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replicates, got {replicates}"
        )));
    }
    let m = labels.len();
    if m == 0 {
        return Err(Error::Empty);
    }
    #[allow(clippy::type_complexity)]
    let per_rep: Vec<Result<(Vec<Vec<Option<f64>>>, Vec<usize>)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let in_bag = resample_indices(seed, r, m);
            let mut seen = vec![false; m];
            for &i in &in_bag {
                seen[i] = true;
            }
            let oob: Vec<usize> = (0..m).filter(|&i| !seen[i]).collect();
            let decisions = if oob.is_empty() {
                Vec::new()
            } else {
                model.fit_predict(&in_bag, &oob, derive_seed(seed, tags::LEARNER, r as u64))?
            };
            Ok(group_rates(labels, membership, &oob, &decisions, metrics))
        })
        .collect();
    let mut rates = Vec::with_capacity(replicates);
    let mut group_sizes = Vec::with_capacity(replicates);
    for rep in per_rep {
        let (r, n) = rep?;
        rates.push(r);
        group_sizes.push(n);
    }
    let out = ReplicateRates {
        groups: group_names(contrast),
        metrics: metrics.to_vec(),
        rates,
        group_sizes,
    };
    check_groups(&out)?;
    let fractions = out.group_sizes.iter().map(|n| n[0] as f64 / m as f64).collect();
    Ok((out, fractions))
}

/// Trains `spec` on each resample of `data` and scores the out-of-bag rows.
pub fn bootstrap_estimate(
    spec: &LearnerSpec,
    data: &Dataset,
    contrast: &Contrast,
    metrics: &[Metric],
    replicates: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    contrast.validate(&data.schema)?;
    let model = LearnerReplicate::new(spec, data, true)?;
    let membership = contrast.membership(data)?;
    let (rates, fractions) = bootstrap_with(&model, data.labels(), &membership, contrast, metrics, replicates, seed)?;
    let (estimates, differences) = rates.summarize("OOB");
    Ok(BootstrapReport {
        replicates,
        mean_oob_fraction: fractions.iter().sum::<f64>() / fractions.len() as f64,
        estimates,
        differences,
    })
}

/// Fixed-model mode: resamples already-made decisions on an evaluation set.
pub fn fixed_bootstrap(
    labels: &[u8],
    decisions: &[u8],
    membership: &[Option<bool>],
    contrast: &Contrast,
    metrics: &[Metric],
    replicates: usize,
    seed: u64,
) -> Result<ReplicateRates> {
    if replicates < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replicates, got {replicates}"
        )));
    }
    let m = labels.len();
    if m == 0 || decisions.len() != m || membership.len() != m {
        return Err(Error::InvalidParameter(
            "evaluation vectors must be non-empty and aligned".into(),
        ));
    }
    let (rates, group_sizes): (Vec<_>, Vec<_>) = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, tags::FIXED_BOOTSTRAP, r as u64);
            let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            let d: Vec<u8> = rows.iter().map(|&i| decisions[i]).collect();
            group_rates(labels, membership, &rows, &d, metrics)
        })
        .unzip();
    let out = ReplicateRates {
        groups: group_names(contrast),
        metrics: metrics.to_vec(),
        rates,
        group_sizes,
    };
    check_groups(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct AlwaysNegative;
    impl ReplicateModel for AlwaysNegative {
        fn fit_predict(&self, _: &[usize], eval: &[usize], _: u64) -> Result<Vec<u8>> {
            Ok(vec![0; eval.len()])
        }
    }

    fn contrast() -> Contrast {
        Contrast::new("sex", "F", "M")
    }

    #[test]
    fn degenerate_all_negative() {
        let labels = vec![0u8; 200];
        let membership: Vec<Option<bool>> = (0..200).map(|i| Some(i % 2 == 0)).collect();
        let (rates, _) = bootstrap_with(
            &AlwaysNegative,
            &labels,
            &membership,
            &contrast(),
            &[Metric::FPR],
            20,
            3,
        )
        .unwrap();
        let (est, _) = rates.summarize("W");
        let all = &est[0];
        assert_eq!((all.mean, all.ci_low, all.ci_high), (Some(0.0), Some(0.0), Some(0.0)));
        assert_eq!(all.n_defined, 20);
    }

    #[test]
    fn replicate_resample_independent_of_count() {
        let a = resample_indices(9, 4, 50);
        let b = resample_indices(9, 4, 50);
        assert_eq!(a, b);
        assert_ne!(a, resample_indices(9, 5, 50));
    }

    #[test]
    fn absent_group_is_an_error() {
        let labels = vec![0u8, 1, 0, 1, 1, 0];
        let membership = vec![Some(false); 6];
        let r = bootstrap_with(&AlwaysNegative, &labels, &membership, &contrast(), &[Metric::FNR], 5, 1);
        assert!(matches!(r, Err(Error::MissingGroup(_))));
    }

    #[test]
    fn undefined_everywhere_is_reported_not_fatal() {
        let labels = vec![0u8; 40];
        let membership: Vec<Option<bool>> = (0..40).map(|i| Some(i % 2 == 0)).collect();
        let rates = fixed_bootstrap(&labels, &[0; 40], &membership, &contrast(), &[Metric::FNR], 10, 2).unwrap();
        let (est, diff) = rates.summarize("W");
        assert!(est.iter().all(|e| e.mean.is_none() && e.n_defined == 0));
        assert_eq!(diff[0].delta_mean, None);
    }

    #[test]
    fn swapped_group_order_negates_deltas_exactly() {
        let labels: Vec<u8> = (0..300).map(|i| u8::from(i % 3 == 0)).collect();
        let decisions: Vec<u8> = (0..300).map(|i| u8::from(i % 5 < 2)).collect();
        let membership: Vec<Option<bool>> = (0..300).map(|i| Some(i % 2 == 0)).collect();
        let rates = fixed_bootstrap(&labels, &decisions, &membership, &contrast(), &Metric::ALL, 30, 5).unwrap();
        for m in Metric::ALL {
            let ab = rates.deltas(m, 1, 2);
            let ba = rates.deltas(m, 2, 1);
            for (x, y) in ab.iter().zip(&ba) {
                assert_eq!(x.map(|v| -v), *y);
            }
            let mean_ab: f64 = ab.iter().flatten().sum();
            let mean_ba: f64 = ba.iter().flatten().sum();
            assert_eq!(mean_ab, -mean_ba);
        }
    }
}
