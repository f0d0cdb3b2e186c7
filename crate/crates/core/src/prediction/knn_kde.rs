//! Data-driven backend: k-nearest-neighbor completion and forecasting on
//! z-normalized signals, plus a Gaussian kernel density estimate for scoring.

use super::{FailureAssignment, PredictionError, PredictionResult, PredictorBackend, Result, SIGMA_MIN};
use crate::data_model::{Sample, SignalVector};

const EXACT_HIT: f64 = 1e-12;

/// Per-signal mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Sample standard deviation, floored at [`SIGMA_MIN`].
    pub fn fit(history: &[Sample]) -> Self {
        let n = history.first().map_or(0, |s| s.x.len());
        let len = history.len() as f64;
        let mean: Vec<f64> = (0..n).map(|i| history.iter().map(|s| s.x[i]).sum::<f64>() / len).collect();
        let std = (0..n)
            .map(|i| {
                if history.len() < 2 {
                    return SIGMA_MIN;
                }
                let ss: f64 = history.iter().map(|s| (s.x[i] - mean[i]).powi(2)).sum();
                (ss / (len - 1.0)).sqrt().max(SIGMA_MIN)
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Gaussian product-kernel density on z-normalized data with Silverman
/// bandwidths. Scores are ranks against the leave-one-out densities of
/// the training points.
#[derive(Debug, Clone)]
pub struct Kde {
    normalizer: Normalizer,
    points: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
    log_norm: f64,
    loo: Vec<f64>,
    loo_sorted: Vec<f64>,
}

impl Kde {
    pub fn fit(history: &[Sample]) -> Result<Self> {
        if history.is_empty() {
            return Err(PredictionError::EmptyHistory);
        }
        let normalizer = Normalizer::fit(history);
        let points: Vec<Vec<f64>> = history.iter().map(|s| normalizer.apply(&s.x)).collect();
        let n = points.len() as f64;
        let d = points[0].len();
        let factor = (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0));
        let bandwidth: Vec<f64> = (0..d)
            .map(|j| {
                let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
                let var = if points.len() > 1 {
                    points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                var.sqrt().max(SIGMA_MIN) * factor
            })
            .collect();
        let log_norm = bandwidth.iter().map(|h| (h * (2.0 * std::f64::consts::PI).sqrt()).ln()).sum();
        let mut kde = Kde { normalizer, points, bandwidth, log_norm, loo: Vec::new(), loo_sorted: Vec::new() };
        kde.loo = (0..kde.points.len()).map(|j| kde.leave_one_out(j)).collect();
        kde.loo_sorted = kde.loo.clone();
        kde.loo_sorted.sort_by(f64::total_cmp);
        Ok(kde)
    }

    fn log_kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        -0.5 * a.iter().zip(b).zip(&self.bandwidth).map(|((x, y), h)| ((x - y) / h).powi(2)).sum::<f64>()
    }

    fn log_density_z(&self, z: &[f64]) -> f64 {
        let lse = log_sum_exp(self.points.iter().map(|p| self.log_kernel(z, p)));
        lse - (self.points.len() as f64).ln() - self.log_norm
    }

    /// Density at training point `j` from the others; a lone point is
    /// compared against its own kernel peak.
    fn leave_one_out(&self, j: usize) -> f64 {
        let n = self.points.len();
        if n == 1 {
            return -self.log_norm;
        }
        let z = &self.points[j];
        let lse =
            log_sum_exp(self.points.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, p)| self.log_kernel(z, p)));
        lse - ((n - 1) as f64).ln() - self.log_norm
    }

    /// Log density at a raw signal vector.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.log_density_z(&self.normalizer.apply(x))
    }

    /// Fraction of training points whose leave-one-out density is at most
    /// the density at `x`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let ld = self.log_density(x);
        self.loo_sorted.partition_point(|&v| v <= ld) as f64 / self.loo_sorted.len() as f64
    }

    /// Leave-one-out log densities, in training order.
    pub fn leave_one_out_log_densities(&self) -> &[f64] {
        &self.loo
    }

    pub fn training_scores(&self) -> Vec<f64> {
        let n = self.loo_sorted.len() as f64;
        self.loo.iter().map(|&v| self.loo_sorted.partition_point(|&w| w <= v) as f64 / n).collect()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }
}

/// k-nearest-neighbor completion with inverse-distance weights and Gaussian
/// KDE confidences. Forecasts add the neighbors' observed increments over
/// the horizon to the window's last sample.
#[derive(Debug, Clone)]
pub struct KnnKde {
    pub k: usize,
    train: Vec<Sample>,
    z: Vec<Vec<f64>>,
    normalizer: Option<Normalizer>,
    kde: Option<Kde>,
    residual_sigma: Vec<f64>,
}

impl Default for KnnKde {
    fn default() -> Self {
        KnnKde { k: 5, train: Vec::new(), z: Vec::new(), normalizer: None, kde: None, residual_sigma: Vec::new() }
    }
}

impl KnnKde {
    fn fitted(&self) -> Result<(&Normalizer, &Kde)> {
        match (&self.normalizer, &self.kde) {
            (Some(n), Some(k)) => Ok((n, k)),
            _ => Err(PredictionError::NotFitted),
        }
    }

    /// Index of the training sample `horizon` after sample `j`, if recorded.
    fn successor(&self, j: usize, horizon: f64) -> Option<usize> {
        let target = self.train[j].at.secs() + horizon;
        let tol = 1e-6 * horizon.max(1.0);
        let i = self.train.partition_point(|s| s.at.secs() < target - tol);
        (i < self.train.len() && (self.train[i].at.secs() - target).abs() <= tol).then_some(i)
    }

    /// The `k` nearest candidates with their weights.
    fn neighbors(&self, dist: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = dist.collect();
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(self.k);
        if d.first().is_some_and(|&(_, dist)| dist <= EXACT_HIT) {
            d.retain(|&(_, dist)| dist <= EXACT_HIT);
            return d.into_iter().map(|(i, _)| (i, 1.0)).collect();
        }
        d.into_iter().map(|(i, dist)| (i, 1.0 / dist)).collect()
    }

    fn distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    /// Forecast of `last` over `horizon` from candidates passing `keep`.
    fn forecast(&self, last: &Sample, horizon: f64, keep: impl Fn(usize) -> bool) -> Option<(Vec<f64>, Vec<f64>)> {
        let normalizer = self.normalizer.as_ref()?;
        let z = normalizer.apply(&last.x);
        let candidates: Vec<(usize, usize)> = (0..self.train.len())
            .filter(|&j| keep(j))
            .filter_map(|j| self.successor(j, horizon).map(|s| (j, s)))
            .collect();
        if candidates.is_empty() {
            return None;
        }
        let nb = self.neighbors(candidates.iter().enumerate().map(|(c, &(j, _))| (c, Self::distance(&z, &self.z[j]))));
        let total: f64 = nb.iter().map(|(_, w)| w).sum();
        let n = last.x.len();
        let delta = |c: usize, i: usize| {
            let (j, s) = candidates[c];
            self.train[s].x[i] - self.train[j].x[i]
        };
        let mut pred = Vec::with_capacity(n);
        let mut spread = Vec::with_capacity(n);
        for i in 0..n {
            let mean = nb.iter().map(|&(c, w)| w * delta(c, i)).sum::<f64>() / total;
            let var = nb.iter().map(|&(c, w)| w * (delta(c, i) - mean).powi(2)).sum::<f64>() / total;
            pred.push(last.x[i] + mean);
            spread.push(var.sqrt());
        }
        Some((pred, spread))
    }

    fn loo_residuals(&self) -> Vec<Vec<f64>> {
        (0..self.train.len().saturating_sub(1))
            .filter_map(|j| {
                let horizon = self.train[j + 1].at.secs() - self.train[j].at.secs();
                let (pred, _) = self.forecast(&self.train[j], horizon, |i| i.abs_diff(j) > 1)?;
                Some(self.train[j + 1].x.iter().zip(pred).map(|(a, p)| a - p).collect())
            })
            .collect()
    }
}

impl PredictorBackend for KnnKde {
    fn name(&self) -> &'static str {
        "knn-kde"
    }

    fn honors_failures(&self) -> bool {
        false
    }

    fn fit(&mut self, history: &[Sample]) -> Result<()> {
        if history.is_empty() {
            return Err(PredictionError::EmptyHistory);
        }
        let normalizer = Normalizer::fit(history);
        self.z = history.iter().map(|s| normalizer.apply(&s.x)).collect();
        self.train = history.to_vec();
        self.normalizer = Some(normalizer);
        self.kde = Some(Kde::fit(history)?);
        let residuals = self.loo_residuals();
        let n = history[0].x.len();
        self.residual_sigma = (0..n)
            .map(|i| {
                if residuals.is_empty() {
                    return SIGMA_MIN;
                }
                (residuals.iter().map(|r| r[i] * r[i]).sum::<f64>() / residuals.len() as f64).sqrt().max(SIGMA_MIN)
            })
            .collect();
        Ok(())
    }

    fn predict_static(&self, partial: &SignalVector, _failures: &FailureAssignment) -> Result<PredictionResult> {
        let (normalizer, kde) = self.fitted()?;
        let observed: Vec<(usize, f64)> = partial
            .0
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, (v - normalizer.mean[i]) / normalizer.std[i])))
            .collect();
        let dist = self
            .z
            .iter()
            .enumerate()
            .map(|(j, z)| (j, observed.iter().map(|&(i, v)| (v - z[i]).powi(2)).sum::<f64>().sqrt()));
        let nb = self.neighbors(dist);
        let total: f64 = nb.iter().map(|(_, w)| w).sum();
        let filled: Vec<f64> = (0..partial.len())
            .map(|i| {
                partial.0[i].unwrap_or_else(|| nb.iter().map(|&(j, w)| w * self.train[j].x[i]).sum::<f64>() / total)
            })
            .collect();
        let confidence = kde.score(&filled);
        Ok(PredictionResult {
            x: SignalVector::complete(&filled),
            p: partial.0.iter().map(|v| Some(if v.is_some() { 1.0 } else { confidence })).collect(),
        })
    }

    fn predict_dynamic(
        &self,
        window: &[Sample],
        horizon: f64,
        _failures: &FailureAssignment,
    ) -> Result<PredictionResult> {
        self.fitted()?;
        let last = window.last().ok_or(PredictionError::EmptyWindow)?;
        let Some((pred, spread)) = self.forecast(last, horizon, |_| true) else {
            return Ok(PredictionResult::missing(last.x.len()));
        };
        let p = spread
            .iter()
            .zip(&self.residual_sigma)
            .map(|(s, sigma)| Some((-0.5 * (s / sigma).powi(2)).exp()))
            .collect();
        Ok(PredictionResult { x: SignalVector::complete(&pred), p })
    }

    fn training_residuals(&self, _history: &[Sample]) -> Vec<Vec<f64>> {
        self.loo_residuals()
    }
}
