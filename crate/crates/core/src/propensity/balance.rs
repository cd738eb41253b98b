use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MatchedSample, SurrogateFlag};
use crate::dataset::{ColumnKind, Contrast, Dataset};
use crate::design::{ColumnSelection, DesignEncoder, FeatureSource};
use crate::error::Result;

/// Standardized mean difference of one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smd {
    pub mean_treated: f64,
    pub mean_control: f64,
    /// `None` when the pooled variance is zero but the means differ.
    pub value: Option<f64>,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBalance {
    pub feature: String,
    pub before: Smd,
    pub after: Option<Smd>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub features: Vec<FeatureBalance>,
    pub surrogates: Vec<SurrogateFlag>,
}

impl BalanceReport {
    pub fn max_abs_before(&self) -> f64 {
        self.features
            .iter()
            .filter_map(|f| f.before.value)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_after(&self) -> Option<f64> {
        self.features
            .iter()
            .map(|f| f.after.as_ref().and_then(|a| a.value))
            .try_fold(0.0_f64, |m, v| v.map(|v| m.max(v.abs())))
    }
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// SMD = (mean1 - mean0) / sqrt((s1^2 + s0^2) / 2). Indicator features use
/// the proportion variance p(1-p).
pub fn smd(treated: &[f64], control: &[f64], indicator: bool) -> Smd {
    let (m1, mut v1) = mean_var(treated);
    let (m0, mut v0) = mean_var(control);
    if indicator {
        v1 = m1 * (1.0 - m1);
        v0 = m0 * (1.0 - m0);
    }
    let pooled = ((v1 + v0) / 2.0).sqrt();
    let (value, degenerate) = if pooled > 0.0 {
        (Some((m1 - m0) / pooled), false)
    } else if m1 == m0 {
        (Some(0.0), false)
    } else {
        (None, true)
    };
    Smd {
        mean_treated: m1,
        mean_control: m0,
        value,
        degenerate,
    }
}

/// Balance of every baseline feature (continuous columns and one indicator
/// per category) between the contrast groups, on the full data and, when
/// given, on the matched rows.
pub fn balance_smd(data: &Dataset, contrast: &Contrast, matched: Option<&MatchedSample>) -> Result<BalanceReport> {
    contrast.validate(&data.schema)?;
    let encoder = DesignEncoder::build(data, &ColumnSelection::all(false))?;
    let x = encoder.encode(data)?;
    let membership = contrast.membership(data)?;
    let treated_all: Vec<usize> = (0..data.n_rows()).filter(|&i| membership[i] == Some(true)).collect();
    let control_all: Vec<usize> = (0..data.n_rows()).filter(|&i| membership[i] == Some(false)).collect();
    let matched_rows = matched.map(|m| {
        (
            m.pairs.iter().map(|p| p.0).collect::<Vec<_>>(),
            m.pairs.iter().map(|p| p.1).collect::<Vec<_>>(),
        )
    });

    let features = encoder
        .features
        .par_iter()
        .enumerate()
        .map(|(j, f)| {
            let indicator = matches!(f, FeatureSource::Indicator { .. });
            let pick = |rows: &[usize]| rows.iter().map(|&r| x.get(r, j)).collect::<Vec<_>>();
            let before = smd(&pick(&treated_all), &pick(&control_all), indicator);
            let after = matched_rows
                .as_ref()
                .filter(|(t, _)| !t.is_empty())
                .map(|(t, c)| smd(&pick(t), &pick(c), indicator));
            FeatureBalance {
                feature: f.name(),
                before,
                after,
            }
        })
        .collect();
    debug_assert!(encoder.features.iter().all(|f| {
        data.schema
            .column(f.column())
            .is_some_and(|c| c.kind != ColumnKind::Sensitive)
    }));
    Ok(BalanceReport {
        features,
        surrogates: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_have_zero_smd() {
        let a = [0.1, 0.4, 0.7];
        assert_eq!(smd(&a, &a, false).value, Some(0.0));
    }

    #[test]
    fn unit_shift_with_unit_sd() {
        // Both samples have sample variance exactly 1.
        let t = [0.0, 1.0, 2.0];
        let c = [-1.0, 0.0, 1.0];
        let s = smd(&t, &c, false);
        assert!((s.value.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_cases() {
        assert_eq!(smd(&[0.5, 0.5], &[0.5, 0.5], false).value, Some(0.0));
        let s = smd(&[1.0, 1.0], &[0.0, 0.0], false);
        assert!(s.degenerate && s.value.is_none());
    }

    #[test]
    fn indicator_uses_proportion_variance() {
        let t = [1.0, 1.0, 0.0, 0.0];
        let c = [1.0, 0.0, 0.0, 0.0];
        let s = smd(&t, &c, true);
        let expected = (0.5 - 0.25) / ((0.25 + 0.1875) / 2.0f64).sqrt();
        assert!((s.value.unwrap() - expected).abs() < 1e-12);
    }
}
