//! Ranking and threshold metrics for anomaly scores (low score = anomalous).

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Fraction of fault-free training scores that fall below the decision threshold.
pub const THRESHOLD_PERCENTILE: f64 = 5.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub fault: String,
    /// `static` or `dynamic`.
    pub mode: String,
    /// Missing when only one label class is present.
    pub auc: Option<f64>,
    pub f1: f64,
    /// Missing when there are no fault-free points.
    pub fpr: Option<f64>,
    pub threshold: f64,
    pub counts: Counts,
}

/// Linear-interpolated percentile `q ∈ [0, 100]` of `values`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Probability that an anomalous point scores below a normal one, ties
/// counting one half (Mann–Whitney U over average ranks). `None` unless
/// both classes are present.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let n_anom = scored.iter().filter(|(_, a)| *a).count();
    let n_norm = scored.len() - n_anom;
    if n_anom == 0 || n_norm == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum_norm = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_norm += order[i..=j].iter().filter(|&&k| !scored[k].1).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_sum_norm - (n_norm * (n_norm + 1)) as f64 / 2.0;
    Some(u / (n_anom as f64 * n_norm as f64))
}

/// Confusion counts with "anomalous" predicted iff `score < threshold`.
pub fn counts(scored: &[(f64, bool)], threshold: f64) -> Counts {
    let mut c = Counts::default();
    for &(s, anomalous) in scored {
        match (s < threshold, anomalous) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// F1 of the anomalous class; 1 when there is nothing to find and nothing is flagged.
pub fn f1(c: &Counts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.tp as f64 / denom as f64
    }
}

pub fn evaluate_anomaly(scored: &[(f64, bool)], threshold: f64) -> Result<EvalReport, HarnessError> {
    if scored.is_empty() {
        return Err(HarnessError::validation("no scored points to evaluate"));
    }
    let c = counts(scored, threshold);
    let negatives = c.fp + c.tn;
    Ok(EvalReport {
        config: String::new(),
        fault: String::new(),
        mode: String::new(),
        auc: auc(scored),
        f1: f1(&c),
        fpr: (negatives > 0).then(|| c.fp as f64 / negatives as f64),
        threshold,
        counts: c,
    })
}
