use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

use super::enumerate::{check_targets, PreparedParams};
use super::evidence::{Evidence, Target};

/// Posterior probability of one value of a target with its 95% interval
/// across draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityInterval {
    pub value: u8,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetPrediction {
    pub target: Target,
    pub probabilities: Vec<ProbabilityInterval>,
    /// Per-draw marginals, `draws[i][value]`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<Vec<f64>>>,
}

impl TargetPrediction {
    /// Mean posterior probability of `value`.
    pub fn mean(&self, value: u8) -> f64 {
        self.probabilities
            .iter()
            .find(|p| p.value == value)
            .map_or(f64::NAN, |p| p.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub n_draws: usize,
    pub predictions: Vec<TargetPrediction>,
}

impl PredictionResult {
    pub fn get(&self, t: Target) -> Option<&TargetPrediction> {
        self.predictions.iter().find(|p| p.target == t)
    }
}

pub const INTERVAL_LOWER: f64 = 0.025;
pub const INTERVAL_UPPER: f64 = 0.975;

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(per_draw: Vec<Vec<Vec<f64>>>, targets: &[Target], keep_draws: bool) -> PredictionResult {
    let n = per_draw.len();
    let predictions = targets
        .iter()
        .enumerate()
        .map(|(ti, &t)| {
            let probabilities = (0..t.arity())
                .map(|v| {
                    let mut xs: Vec<f64> = per_draw.iter().map(|d| d[ti][v]).collect();
                    let mean = xs.iter().sum::<f64>() / n as f64;
                    xs.sort_by(f64::total_cmp);
                    ProbabilityInterval {
                        value: v as u8,
                        mean,
                        lower: quantile_sorted(&xs, INTERVAL_LOWER),
                        upper: quantile_sorted(&xs, INTERVAL_UPPER),
                    }
                })
                .collect();
            TargetPrediction {
                target: t,
                probabilities,
                draws: keep_draws.then(|| per_draw.iter().map(|d| d[ti].clone()).collect()),
            }
        })
        .collect();
    PredictionResult { n_draws: n, predictions }
}

fn check_draws(draws: &[ModelParams], ev: &Evidence, targets: &[Target]) -> Result<()> {
    let first = draws
        .first()
        .ok_or_else(|| Error::InsufficientData("no posterior draws".into()))?;
    let shape = first.shape();
    ev.validate(&shape)?;
    check_targets(&shape, ev, targets)
}

/// Target marginals under every draw, summarized by the across-draw mean
/// and 2.5%/97.5% percentiles.
pub fn predict(draws: &[ModelParams], ev: &Evidence, targets: &[Target]) -> Result<PredictionResult> {
    predict_with_draws(draws, ev, targets, false)
}

/// As [`predict`], optionally retaining every per-draw marginal.
pub fn predict_with_draws(
    draws: &[ModelParams],
    ev: &Evidence,
    targets: &[Target],
    keep_draws: bool,
) -> Result<PredictionResult> {
    check_draws(draws, ev, targets)?;
    let per_draw = draws
        .par_iter()
        .map(|p| PreparedParams::for_evidence(p, ev).marginals(ev, targets))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_draw, targets, keep_draws))
}

/// Draws with full lookup tables, for scoring many queries against the
/// same posterior.
#[derive(Debug, Clone)]
pub struct Predictor {
    prepared: Vec<PreparedParams>,
}

impl Predictor {
    pub fn new(draws: &[ModelParams]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InsufficientData("no posterior draws".into()));
        }
        Ok(Predictor {
            prepared: draws.par_iter().map(PreparedParams::new).collect(),
        })
    }

    pub fn n_draws(&self) -> usize {
        self.prepared.len()
    }

    pub fn predict(&self, ev: &Evidence, targets: &[Target]) -> Result<PredictionResult> {
        let shape = self.prepared[0].shape();
        ev.validate(&shape)?;
        check_targets(&shape, ev, targets)?;
        let per_draw = self
            .prepared
            .iter()
            .map(|p| p.marginals(ev, targets))
            .collect::<Result<Vec<_>>>()?;
        Ok(summarize(per_draw, targets, false))
    }

    /// Across-draw mean probability that each target equals 1.
    pub fn mean_positive(&self, ev: &Evidence, targets: &[Target]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; targets.len()];
        for p in &self.prepared {
            for (a, m) in acc.iter_mut().zip(p.marginals(ev, targets)?) {
                *a += m[1];
            }
        }
        let n = self.prepared.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}
