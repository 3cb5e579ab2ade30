use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::logistic;
use crate::types::{Condition, SymptomVector};

const MAX_NEWTON: usize = 25;
const NEWTON_TOL: f64 = 1e-10;
/// Threshold used when no item score reaches probability 0.5.
pub const FALLBACK_THRESHOLD: u8 = 2;

/// Per-item thresholds: an item is high when its score is at least `t_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizerState {
    pub thresholds: Vec<u8>,
    /// Items that fell back to [`FALLBACK_THRESHOLD`].
    pub fallback: Vec<usize>,
}

/// Newton-Raphson fit of `P(C=1 | x) = logistic(b0 + b1 x)`.
///
/// Stops when the step norm drops below 1e-10 or after 25 iterations, which
/// bounds the coefficients under perfect separation.
pub fn fit_logistic_1d(x: &[f64], y: &[bool]) -> [f64; 2] {
    let mut b = [0.0f64; 2];
    for _ in 0..MAX_NEWTON {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = logistic(b[0] + b[1] * xi);
            let r = yi as u8 as f64 - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det.abs() > 1e-300) {
            break;
        }
        let s0 = (h11 * g0 - h01 * g1) / det;
        let s1 = (h00 * g1 - h01 * g0) / det;
        b[0] += s0;
        b[1] += s1;
        if (s0 * s0 + s1 * s1).sqrt() < NEWTON_TOL {
            break;
        }
    }
    b
}

/// Fits one threshold per item from raw scores and condition labels.
pub fn fit_binarizer(items: &[Vec<u8>], condition: &[Condition]) -> Result<BinarizerState> {
    if items.len() != condition.len() {
        return Err(Error::Structural("item rows and labels differ in length".into()));
    }
    let y: Vec<bool> = condition.iter().map(|c| *c == Condition::Present).collect();
    if y.iter().all(|&v| v) || !y.iter().any(|&v| v) {
        return Err(Error::InsufficientData("binarizer needs both condition classes".into()));
    }
    let n_items = items[0].len();
    let mut thresholds = Vec::with_capacity(n_items);
    let mut fallback = Vec::new();
    for s in 0..n_items {
        let x: Vec<f64> = items.iter().map(|r| r[s] as f64).collect();
        let b = fit_logistic_1d(&x, &y);
        let t = (1u8..=3).find(|&t| logistic(b[0] + b[1] * t as f64) >= 0.5);
        match t {
            Some(t) => thresholds.push(t),
            None => {
                thresholds.push(FALLBACK_THRESHOLD);
                fallback.push(s);
            }
        }
    }
    Ok(BinarizerState { thresholds, fallback })
}

impl BinarizerState {
    pub fn binarize(&self, items: &[u8]) -> Result<SymptomVector> {
        if items.len() != self.thresholds.len() {
            return Err(Error::Structural(format!(
                "{} items for {} thresholds",
                items.len(),
                self.thresholds.len()
            )));
        }
        SymptomVector::new(items.iter().zip(&self.thresholds).map(|(&v, &t)| (v >= t) as u8).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_data_thresholds_at_split() {
        let items: Vec<Vec<u8>> = (0..80).map(|i| vec![(i % 4) as u8]).collect();
        let cond: Vec<Condition> = items.iter().map(|r| Condition::from_bit(r[0] >= 2)).collect();
        let st = fit_binarizer(&items, &cond).unwrap();
        assert_eq!(st.thresholds, vec![2]);
        assert!(st.fallback.is_empty());
    }

    #[test]
    fn unrelated_item_falls_back() {
        // flat regression with base rate below one half
        let items: Vec<Vec<u8>> = (0..120).map(|i| vec![(i % 4) as u8]).collect();
        let cond: Vec<Condition> = (0..120).map(|i| Condition::from_bit((i / 4) % 4 == 0)).collect();
        let st = fit_binarizer(&items, &cond).unwrap();
        assert_eq!(st.thresholds, vec![FALLBACK_THRESHOLD]);
        assert_eq!(st.fallback, vec![0]);
    }

    #[test]
    fn zeros_binarize_low() {
        let st = BinarizerState {
            thresholds: vec![1, 2, 3, 1, 2, 3, 1, 2],
            fallback: vec![],
        };
        assert_eq!(st.binarize(&[0; 8]).unwrap().mask(), 0);
        assert_eq!(st.binarize(&[1, 1, 3, 0, 2, 2, 1, 1]).unwrap().values(), &[1, 0, 1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn single_class_is_an_error() {
        let items = vec![vec![1u8], vec![2]];
        assert!(fit_binarizer(&items, &[Condition::Absent, Condition::Absent]).is_err());
    }

    #[test]
    fn newton_matches_closed_form_for_binary_covariate() {
        // with x in {0,1} the MLE reproduces the two group log-odds
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = [true, false, false, false, true, true, true, false];
        let b = fit_logistic_1d(&x, &y);
        assert!((b[0] - (1.0f64 / 3.0).ln()).abs() < 1e-9);
        assert!((b[0] + b[1] - 3.0f64.ln()).abs() < 1e-9);
    }
}
