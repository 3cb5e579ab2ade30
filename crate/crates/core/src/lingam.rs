//! DirectLiNGAM structure discovery for the symptom graph.
//!
//! The causal order is built one variable at a time: the most exogenous
//! remaining variable is the one whose pairwise regressions leave residuals
//! that look most independent of it, measured with a likelihood-ratio
//! statistic on maximum-entropy approximations of differential entropy.
//! Edges are then pruned by thresholding standardized least-squares
//! coefficients on each variable's predecessors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dag::SymptomDag;
use crate::error::{Error, Result};
use crate::types::{ParticipantRecord, PHQ8_ITEMS};

const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;

/// Minimum number of complete PHQ-8 records for discovery.
pub const MIN_RECORDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LingamConfig {
    /// Minimum absolute standardized coefficient for an edge to be kept.
    pub prune_threshold: f64,
    pub seed: u64,
}

impl Default for LingamConfig {
    fn default() -> Self {
        LingamConfig {
            prune_threshold: 0.05,
            seed: 0,
        }
    }
}

impl LingamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::value("prune_threshold", "must be >= 0"));
        }
        Ok(())
    }
}

/// Result of pruning: the graph, the standardized coefficients
/// (`coef[j][s]` for edge `j -> s`), and whether a ridge term was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub dag: SymptomDag,
    pub coefficients: Vec<Vec<f64>>,
    pub ridge_fallback: bool,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn pop_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    let s = pop_std(x);
    if s > 0.0 {
        x.iter().map(|v| (v - m) / s).collect()
    } else {
        vec![0.0; x.len()]
    }
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Maximum-entropy approximation of the differential entropy of a
/// standardized sample.
pub fn entropy(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let lc = u.iter().map(|&v| log_cosh(v)).sum::<f64>() / n;
    let gk = u.iter().map(|&v| v * (-0.5 * v * v).exp()).sum::<f64>() / n;
    (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0 - K1 * (lc - GAMMA).powi(2) - K2 * gk * gk
}

/// Residual of the least-squares regression of `xi` on `xj`.
fn residual(xi: &[f64], xj: &[f64]) -> Vec<f64> {
    let mi = mean(xi);
    let mj = mean(xj);
    let mut cov = 0.0;
    let mut var = 0.0;
    for (a, b) in xi.iter().zip(xj) {
        cov += (a - mi) * (b - mj);
        var += (b - mj) * (b - mj);
    }
    let beta = if var > 0.0 { cov / var } else { 0.0 };
    xi.iter().zip(xj).map(|(a, b)| a - beta * b).collect()
}

/// Likelihood-ratio independence statistic between `xi` and `xj`; positive
/// values favour `xi -> xj`.
fn diff_mutual_info(xi: &[f64], xj: &[f64], h_xi: f64, h_xj: f64) -> f64 {
    let ri_j = standardize(&residual(xi, xj));
    let rj_i = standardize(&residual(xj, xi));
    (h_xj + entropy(&ri_j)) - (h_xi + entropy(&rj_i))
}

fn columns(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).iter().copied().collect()).collect()
}

fn check_matrix(x: &DMatrix<f64>) -> Result<()> {
    let (n, d) = x.shape();
    if d == 0 {
        return Err(Error::InsufficientData("no variables".into()));
    }
    if d > 1 && n <= d {
        return Err(Error::InsufficientData(format!("{n} rows for {d} variables")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::value("data", "non-finite entry"));
    }
    for (j, c) in columns(x).iter().enumerate() {
        if !(pop_std(c) > 0.0) {
            return Err(Error::value(format!("column {j}"), "constant"));
        }
    }
    Ok(())
}

/// Causal order of the columns of `x` (rows are observations).
pub fn causal_order(x: &DMatrix<f64>) -> Result<Vec<usize>> {
    check_matrix(x)?;
    let mut data = columns(x);
    let mut remaining: Vec<usize> = (0..x.ncols()).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while remaining.len() > 1 {
        let std_cols: Vec<Vec<f64>> = remaining.iter().map(|&i| standardize(&data[i])).collect();
        let h: Vec<f64> = std_cols.iter().map(|c| entropy(c)).collect();
        let mut best = (f64::INFINITY, 0);
        for (a, &i) in remaining.iter().enumerate() {
            let mut score = 0.0;
            for (b, _) in remaining.iter().enumerate() {
                if a != b {
                    let diff = diff_mutual_info(&std_cols[a], &std_cols[b], h[a], h[b]);
                    score += diff.min(0.0).powi(2);
                }
            }
            if score < best.0 {
                best = (score, i);
            }
        }
        let m = best.1;
        let xm = data[m].clone();
        for &i in &remaining {
            if i != m {
                data[i] = residual(&data[i], &xm);
            }
        }
        order.push(m);
        remaining.retain(|&i| i != m);
    }
    order.extend(remaining);
    Ok(order)
}

/// Keeps edge `j -> s` when `j` precedes `s` in `order` and the
/// standardized least-squares coefficient of `j` in the regression of `s`
/// on all its predecessors is at least `cfg.prune_threshold` in magnitude.
pub fn prune_edges(x: &DMatrix<f64>, order: &[usize], cfg: &LingamConfig) -> Result<Pruned> {
    cfg.validate()?;
    let d = x.ncols();
    let mut seen = vec![false; d];
    if order.len() != d || order.iter().any(|&i| i >= d || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::OrderInconsistent(format!("{order:?} is not a permutation of 0..{d}")));
    }
    let n = x.nrows();
    let cols: Vec<Vec<f64>> = columns(x).iter().map(|c| standardize(c)).collect();
    let mut adjacency = vec![vec![false; d]; d];
    let mut coefficients = vec![vec![0.0; d]; d];
    let mut ridge_fallback = false;
    for (k, &s) in order.iter().enumerate().skip(1) {
        let preds = &order[..k];
        let design = DMatrix::from_fn(n, k, |r, c| cols[preds[c]][r]);
        let y = DVector::from_column_slice(&cols[s]);
        let xtx = design.transpose() * &design;
        let xty = design.transpose() * y;
        let beta = match xtx.clone().cholesky() {
            Some(ch) => ch.solve(&xty),
            None => {
                ridge_fallback = true;
                let ridged = xtx + DMatrix::identity(k, k) * 1e-8;
                ridged
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("ridge regression failed".into()))?
                    .solve(&xty)
            }
        };
        for (c, &j) in preds.iter().enumerate() {
            coefficients[j][s] = beta[c];
            if beta[c].abs() >= cfg.prune_threshold {
                adjacency[j][s] = true;
            }
        }
    }
    let dag = SymptomDag::new(adjacency, order.to_vec())?;
    Ok(Pruned {
        dag,
        coefficients,
        ridge_fallback,
    })
}

/// Result of discovery on PHQ-8 item scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Discovery {
    pub dag: SymptomDag,
    pub order: Vec<usize>,
    /// Items with no variation, placed last in the order with no edges.
    pub constant_items: Vec<usize>,
    pub ridge_fallback: bool,
}

/// Matrix of raw item scores from records with complete PHQ-8 answers.
pub fn item_matrix(records: &[ParticipantRecord]) -> DMatrix<f64> {
    let rows: Vec<&[u8; PHQ8_ITEMS]> = records.iter().filter_map(|r| r.phq8.as_ref()).collect();
    DMatrix::from_fn(rows.len(), PHQ8_ITEMS, |r, c| rows[r][c] as f64)
}

/// Runs causal ordering and pruning on the raw 0-3 item scores.
pub fn discover_symptom_dag(records: &[ParticipantRecord], cfg: &LingamConfig) -> Result<Discovery> {
    cfg.validate()?;
    let x = item_matrix(records);
    if x.nrows() < MIN_RECORDS {
        return Err(Error::InsufficientData(format!(
            "{} records with complete PHQ-8 items, need {MIN_RECORDS}",
            x.nrows()
        )));
    }
    discover_from_matrix(&x, cfg)
}

/// Discovery on an arbitrary item matrix; constant columns get no edges.
pub fn discover_from_matrix(x: &DMatrix<f64>, cfg: &LingamConfig) -> Result<Discovery> {
    let d = x.ncols();
    let cols = columns(x);
    let (varying, constant_items): (Vec<usize>, Vec<usize>) = (0..d).partition(|&j| pop_std(&cols[j]) > 0.0);
    let mut adjacency = vec![vec![false; d]; d];
    let mut order = Vec::with_capacity(d);
    let mut ridge_fallback = false;
    if !varying.is_empty() {
        let sub = DMatrix::from_fn(x.nrows(), varying.len(), |r, c| x[(r, varying[c])]);
        let sub_order = causal_order(&sub)?;
        let pruned = prune_edges(&sub, &sub_order, cfg)?;
        ridge_fallback = pruned.ridge_fallback;
        for (a, &i) in varying.iter().enumerate() {
            for (b, &j) in varying.iter().enumerate() {
                adjacency[i][j] = pruned.dag.has_edge(a, b);
            }
        }
        order.extend(sub_order.iter().map(|&k| varying[k]));
    }
    order.extend(&constant_items);
    Ok(Discovery {
        dag: SymptomDag::new(adjacency, order.clone())?,
        order,
        constant_items,
        ridge_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(-1.0..1.0)
    }

    #[test]
    fn entropy_of_gaussian_like_sample_is_near_maximum() {
        // a fine grid of standard normal quantiles
        use statrs::distribution::{ContinuousCDF, Normal};
        let nd = Normal::standard();
        let n = 20000;
        let u: Vec<f64> = (0..n).map(|i| nd.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let h_gauss = entropy(&u);
        let max = (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0;
        assert!((h_gauss - max).abs() < 1e-3);
        let uni: Vec<f64> = (0..n).map(|i| 3f64.sqrt() * (2.0 * (i as f64 + 0.5) / n as f64 - 1.0)).collect();
        assert!(entropy(&uni) < h_gauss);
    }

    #[test]
    fn single_variable_order() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 4.0]);
        assert_eq!(causal_order(&x).unwrap(), vec![0]);
    }

    #[test]
    fn two_variable_order_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 5000;
        let x1: Vec<f64> = (0..n).map(|_| uniform(&mut rng)).collect();
        let x2: Vec<f64> = x1.iter().map(|v| 2.0 * v + uniform(&mut rng)).collect();
        let fwd = DMatrix::from_fn(n, 2, |r, c| if c == 0 { x1[r] } else { x2[r] });
        assert_eq!(causal_order(&fwd).unwrap(), vec![0, 1]);
        let swapped = DMatrix::from_fn(n, 2, |r, c| if c == 0 { x2[r] } else { x1[r] });
        assert_eq!(causal_order(&swapped).unwrap(), vec![1, 0]);
    }

    #[test]
    fn constant_column_is_rejected() {
        let x = DMatrix::from_fn(10, 2, |r, c| if c == 0 { 1.0 } else { r as f64 });
        assert!(causal_order(&x).is_err());
    }

    #[test]
    fn threshold_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(200, 4, |_, _| uniform(&mut rng));
        let order = vec![2, 0, 3, 1];
        let full = prune_edges(&x, &order, &LingamConfig { prune_threshold: 0.0, seed: 0 }).unwrap();
        for (k, &s) in order.iter().enumerate() {
            assert_eq!(full.dag.n_parents(s), k);
        }
        let none = prune_edges(&x, &order, &LingamConfig { prune_threshold: 1e9, seed: 0 }).unwrap();
        assert_eq!(none.dag.n_edges(), 0);
    }

    #[test]
    fn collinear_predecessors_use_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..100).map(|_| uniform(&mut rng)).collect();
        let x = DMatrix::from_fn(100, 3, |r, c| match c {
            0 => a[r],
            1 => 2.0 * a[r],
            _ => a[r] + uniform(&mut rng),
        });
        let p = prune_edges(&x, &[0, 1, 2], &LingamConfig::default()).unwrap();
        assert!(p.ridge_fallback);
        p.dag.validate().unwrap();
    }

    #[test]
    fn constant_items_get_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(300, 3, |_, c| if c == 1 { 2.0 } else { rng.random_range(0..4) as f64 });
        let d = discover_from_matrix(&x, &LingamConfig::default()).unwrap();
        assert_eq!(d.constant_items, vec![1]);
        assert_eq!(*d.order.last().unwrap(), 1);
        assert_eq!(d.dag.n_parents(1), 0);
        assert!(!d.dag.has_edge(1, 0) && !d.dag.has_edge(1, 2));
    }
}
