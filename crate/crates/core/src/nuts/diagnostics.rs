//! Convergence diagnostics: rank-normalized split R-hat and effective
//! sample size with Geyer's initial monotone sequence.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Summary of one scalar quantity across chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub mean: f64,
    pub sd: f64,
    /// max of the bulk and folded rank-normalized split R-hat.
    pub rhat: f64,
    pub ess_bulk: f64,
    /// ESS of the raw (unranked) split chains, used for the mean's MCSE.
    pub ess_mean: f64,
    pub mcse_mean: f64,
}

fn check_shape(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::InsufficientData("diagnostics need at least 2 chains".into()));
    }
    let n = chains[0].len();
    if n < 4 {
        return Err(Error::InsufficientData("diagnostics need at least 4 draws per chain".into()));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Structural("chains have different lengths".into()));
    }
    Ok(n)
}

fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains[0].len();
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[n - half..].to_vec()])
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Gelman-Rubin R-hat of already split chains.
fn rhat_raw(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b_over_n = var(&means);
    if w == 0.0 {
        return if b_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Pooled fractional ranks (ties averaged) mapped through the normal
/// quantile function, `z = Φ⁻¹((r - 3/8) / (S + 1/4))`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<(f64, usize)> = chains
        .iter()
        .flatten()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let total = pooled.len();
    let mut sorted = pooled.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && sorted[j + 1].0 == sorted[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for item in &sorted[i..=j] {
            ranks[item.1] = r;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let s = total as f64;
    let n = chains[0].len();
    ranks
        .chunks(n)
        .map(|c| c.iter().map(|&r| normal.inverse_cdf((r - 0.375) / (s + 0.25))).collect())
        .collect()
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first)
}

/// Rank-normalized split R-hat: the larger of the bulk and folded versions.
/// Constant input returns 1.0.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    if is_constant(chains) {
        return Ok(1.0);
    }
    let split = split_chains(chains);
    let bulk = rhat_raw(&rank_normalize(&split));
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let med = median(&all);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|v| (v - med).abs()).collect())
        .collect();
    let tail = if is_constant(&folded) { 1.0 } else { rhat_raw(&rank_normalize(&folded)) };
    Ok(bulk.max(tail))
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Multi-chain ESS (Geyer initial monotone sequence) of chains taken as given.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| v - mu).collect())
        .collect();
    let acov_mean = |lag: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let acov0 = acov_mean(0);
    let mean_var = acov0 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let mut rho = vec![0.0; n + 2];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - acov_mean(1)) / var_plus;
    rho[1] = rho_odd;
    let mut s = 1;
    while s + 4 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - acov_mean(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - acov_mean(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }
    let mut t = 1;
    while t + 3 <= max_s {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    (total / tau).min(total * total.log10())
}

/// Bulk ESS: ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    if is_constant(chains) {
        return Ok(f64::NAN);
    }
    Ok(ess_raw(&rank_normalize(&split_chains(chains))))
}

/// ESS of the raw split chains (for the Monte Carlo error of the mean).
pub fn ess_mean(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    if is_constant(chains) {
        return Ok(f64::NAN);
    }
    Ok(ess_raw(&split_chains(chains)))
}

/// All diagnostics for one scalar quantity; `chains[c][i]` is draw `i` of chain `c`.
pub fn summarize(chains: &[Vec<f64>]) -> Result<ParamDiagnostics> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let rhat = split_rhat(chains)?;
    let ess_bulk = ess_bulk(chains)?;
    let ess_mean = ess_mean(chains)?;
    let sd = var(&all).sqrt();
    Ok(ParamDiagnostics {
        mean: mean(&all),
        sd,
        rhat,
        ess_bulk,
        ess_mean,
        mcse_mean: sd / ess_mean.sqrt(),
    })
}

/// Diagnostics for every coordinate of vector-valued draws,
/// `draws[c][i][k]` being coordinate `k` of draw `i` in chain `c`.
pub fn diagnostics(draws: &[Vec<Vec<f64>>]) -> Result<Vec<ParamDiagnostics>> {
    let dim = draws
        .first()
        .and_then(|c| c.first())
        .map(|d| d.len())
        .ok_or_else(|| Error::InsufficientData("no draws".into()))?;
    (0..dim)
        .map(|k| {
            let chains: Vec<Vec<f64>> = draws.iter().map(|c| c.iter().map(|d| d[k]).collect()).collect();
            summarize(&chains)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn repeated_constant_chains_have_unit_rhat() {
        let chains = vec![vec![2.5; 100]; 4];
        assert!((split_rhat(&chains).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identical_chains_do_not_flag() {
        let base = iid(1, 1, 400).remove(0);
        let chains = vec![base.clone(), base.clone(), base];
        assert!(split_rhat(&chains).unwrap() < 1.01);
    }

    #[test]
    fn offset_chain_is_flagged() {
        let mut chains = iid(2, 4, 500);
        for v in chains[3].iter_mut() {
            *v += 10.0;
        }
        assert!(split_rhat(&chains).unwrap() > 1.5);
    }

    #[test]
    fn iid_ess_close_to_draw_count() {
        for seed in 0..5 {
            let chains = iid(10 + seed, 4, 1000);
            let ess = ess_bulk(&chains).unwrap();
            assert!((ess / 4000.0 - 1.0).abs() < 0.2, "ess {ess}");
            let ess = ess_mean(&chains).unwrap();
            assert!((ess / 4000.0 - 1.0).abs() < 0.2, "ess {ess}");
        }
    }

    #[test]
    fn autocorrelated_chains_have_lower_ess() {
        let noise = iid(3, 4, 2000);
        let chains: Vec<Vec<f64>> = noise
            .iter()
            .map(|c| {
                let mut x = 0.0;
                c.iter()
                    .map(|e| {
                        x = 0.9 * x + e;
                        x
                    })
                    .collect()
            })
            .collect();
        // AR(1) with phi = 0.9: ESS/N ≈ (1-phi)/(1+phi) ≈ 0.053
        let ess = ess_mean(&chains).unwrap();
        assert!(ess > 250.0 && ess < 650.0, "ess {ess}");
    }

    #[test]
    fn insufficient_draws_rejected() {
        assert!(split_rhat(&[vec![1.0, 2.0, 3.0, 4.0]]).is_err());
        assert!(split_rhat(&[vec![1.0, 2.0], vec![1.0, 2.0]]).is_err());
    }
}
