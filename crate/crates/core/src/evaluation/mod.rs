//! Statistics for scoring estimates against truth and clinical outcomes.

mod contingency;
mod ranks;
mod survival;

pub use contingency::{fisher_exact_p, logistic_binary_fit, LogisticFit, Table2x2};
pub use ranks::{average_ranks, wilcoxon_ranksum, wilcoxon_ranksum_p, WilcoxonMethod, WilcoxonResult};
pub use survival::{km_by_group, km_curve, KmPoint};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Clinical outcome of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub patient_id: String,
    /// Relapse within one year of surgery.
    pub relapse_1yr: bool,
    /// Follow-up or event time.
    pub time_days: f64,
    /// Event (true) or censoring (false) at `time_days`.
    pub event: bool,
    /// Above-median predictor group.
    pub group: bool,
}

/// Correlation measure used by [`association`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Association {
    #[default]
    Pearson,
    Spearman,
}

impl std::str::FromStr for Association {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => invalid(format!("unknown association {other:?} (expected pearson or spearman)")),
        }
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return invalid(format!("length mismatch: {a} vs {b}"));
    }
    if a == 0 {
        return invalid("empty input");
    }
    Ok(())
}

pub fn rmse(est: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(est.len(), truth.len())?;
    let ss: f64 = est.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok((ss / est.len() as f64).sqrt())
}

/// Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a.len(), b.len())?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::UndefinedStatistic("correlation of a constant vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn association(est: &[f64], truth: &[f64], method: Association) -> Result<f64> {
    match method {
        Association::Pearson => pearson(est, truth),
        Association::Spearman => {
            same_len(est.len(), truth.len())?;
            pearson(&average_ranks(est), &average_ranks(truth))
        }
    }
}

/// Sample median, averaging the two middle values for even lengths.
pub fn median(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return invalid("median of an empty vector");
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// `true` for values strictly above the sample median.
pub fn dichotomise_at_median(x: &[f64]) -> Result<Vec<bool>> {
    if x.len() < 2 {
        return invalid("dichotomising needs at least two values");
    }
    let m = median(x)?;
    Ok(x.iter().map(|&v| v > m).collect())
}

/// Area under the ROC curve via the Mann-Whitney identity; ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    same_len(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedStatistic("ROC AUC needs both classes".into()));
    }
    let ranks = average_ranks(scores);
    let r_pos: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = r_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.1, -0.1], &[0.0, 0.0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn association_examples() {
        let t = [0.1, 0.5, 0.2, 0.9];
        assert!((association(&t, &t, Association::Pearson).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| 3.0 - v).collect();
        assert!((association(&neg, &t, Association::Pearson).unwrap() + 1.0).abs() < 1e-15);
        let cubed: Vec<f64> = t.iter().map(|v| v * v * v).collect();
        assert_eq!(association(&cubed, &t, Association::Spearman).unwrap(), 1.0);
        assert!(matches!(
            association(&[1.0, 1.0], &[1.0, 2.0], Association::Pearson),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn dichotomise_examples() {
        assert_eq!(dichotomise_at_median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), [false, false, true, true]);
        assert_eq!(dichotomise_at_median(&[2.0; 5]).unwrap(), [false; 5]);
        assert_eq!(
            dichotomise_at_median(&[0.0, 0.0, 0.0, 0.2, 0.5, 0.9]).unwrap(),
            [false, false, false, true, true, true]
        );
        assert_eq!(dichotomise_at_median(&[3.0, 1.0, 2.0]).unwrap(), [true, false, false]);
        assert!(dichotomise_at_median(&[1.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        let l = [false, false, true, true];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    fn pair_count_auc(s: &[f64], l: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &li) in l.iter().enumerate() {
            for (j, &lj) in l.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting_and_flips(
            v in proptest::collection::vec((0u8..6, any::<bool>()), 2..30)
        ) {
            let s: Vec<f64> = v.iter().map(|x| x.0 as f64).collect();
            let l: Vec<bool> = v.iter().map(|x| x.1).collect();
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let a = roc_auc(&s, &l).unwrap();
            prop_assert!((a - pair_count_auc(&s, &l)).abs() < 1e-12);
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            prop_assert!((a + roc_auc(&neg, &l).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn median_split_is_balanced(v in proptest::collection::vec(-5.0f64..5.0, 2..40)) {
            let g = dichotomise_at_median(&v).unwrap();
            let above = g.iter().filter(|&&x| x).count();
            prop_assert!(above <= v.len() / 2);
        }
    }
}
