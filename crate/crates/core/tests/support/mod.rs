//! Independent oracles and generators shared by integration tests.
#![allow(dead_code)]

use mddbayes::dag::SymptomDag;
use mddbayes::inference::{Evidence, Target};
use mddbayes::params::ModelParams;
use mddbayes::types::{AgeGroup, Condition, Device, Gender, ModelShape};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_dag(d: usize, rng: &mut ChaCha8Rng) -> SymptomDag {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut adj = vec![vec![false; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            if rng.random::<f64>() < 0.25 {
                adj[perm[i]][perm[j]] = true;
            }
        }
    }
    SymptomDag::from_adjacency(adj).unwrap()
}

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn bern(p: f64, x: usize) -> f64 {
    if x == 1 {
        p
    } else {
        1.0 - p
    }
}

/// Log joint of one full discrete assignment plus the observed measures.
pub fn oracle_log_joint(p: &ModelParams, a: usize, g: usize, d: usize, c: usize, s: &[usize], ev: &Evidence) -> f64 {
    let (af, gf, df, cf) = (a as f64, g as f64, d as f64, c as f64);
    let mut lp = p.age_probs[a].ln() + bern(p.gender_prob, g).ln() + bern(p.device_prob, d).ln();
    lp += bern(sig(p.cond_w[0] + p.cond_w[1] * af + p.cond_w[2] * gf), c).ln();
    for k in 0..s.len() {
        let w = &p.symp_w[k];
        let mut eta = w[0] + w[1] * af + w[2] * gf + w[3] * cf;
        let parents: Vec<usize> = (0..s.len()).filter(|&j| p.dag.adjacency()[j][k]).collect();
        for (i, j) in parents.iter().enumerate() {
            eta += w[4 + i] * s[*j] as f64;
        }
        lp += bern(sig(eta), s[k]).ln();
    }
    for (&m, &x) in &ev.measures {
        let w = &p.meas_w[m];
        let mut mean = w[0] + w[1] * af + w[2] * gf + w[3] * df + w[4] * cf;
        for (k, sk) in s.iter().enumerate() {
            mean += w[5 + k] * *sk as f64;
        }
        let sd = p.meas_sigma[m];
        lp += -0.5 * ((x - mean) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    lp
}

pub fn oracle_marginals(p: &ModelParams, ev: &Evidence, targets: &[Target]) -> Vec<Vec<f64>> {
    let n_s = p.symp_w.len();
    let mut rows: Vec<([usize; 4], Vec<usize>, f64)> = Vec::new();
    for a in 0..4 {
        for g in 0..2 {
            for d in 0..2 {
                for c in 0..2 {
                    for mask in 0..1usize << n_s {
                        let s: Vec<usize> = (0..n_s).map(|k| (mask >> k) & 1).collect();
                        let keep = ev.age.is_none_or(|v| v.code() as usize == a)
                            && ev.gender.is_none_or(|v| v.code() as usize == g)
                            && ev.device.is_none_or(|v| v.code() as usize == d)
                            && ev.condition.is_none_or(|v| v.code() as usize == c)
                            && ev.symptoms.iter().all(|(&k, &v)| s[k] == v as usize);
                        if keep {
                            let lp = oracle_log_joint(p, a, g, d, c, &s, ev);
                            rows.push(([a, g, d, c], s, lp));
                        }
                    }
                }
            }
        }
    }
    let max = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = rows.iter().map(|r| (r.2 - max).exp()).sum();
    targets
        .iter()
        .map(|t| {
            let mut m = vec![0.0; t.arity()];
            for (conf, s, lp) in &rows {
                let v = match t {
                    Target::Age => conf[0],
                    Target::Gender => conf[1],
                    Target::Device => conf[2],
                    Target::Condition => conf[3],
                    Target::Symptom(k) => s[*k],
                };
                m[v] += (lp - max).exp() / z;
            }
            m
        })
        .collect()
}

pub fn random_evidence(shape: &ModelShape, rng: &mut ChaCha8Rng) -> Evidence {
    let mut ev = Evidence::new();
    let obs = |rng: &mut ChaCha8Rng| rng.random::<f64>() < 0.3;
    if obs(rng) {
        ev.age = Some(AgeGroup::new(rng.random_range(0..4)).unwrap());
    }
    if obs(rng) {
        ev.gender = Some(Gender::from_bit(rng.random()));
    }
    if obs(rng) {
        ev.device = Some(Device::from_bit(rng.random()));
    }
    if obs(rng) {
        ev.condition = Some(Condition::from_bit(rng.random()));
    }
    for k in 0..shape.n_symptoms {
        if obs(rng) {
            ev.symptoms.insert(k, rng.random_range(0..2));
        }
    }
    for m in 0..shape.n_measures {
        if rng.random::<f64>() < 0.5 {
            ev.measures.insert(m, rng.random_range(-3.0..3.0));
        }
    }
    ev
}

/// Fully connected linear non-Gaussian model under a random order, so the
/// causal order is unique. Returns data and the true order.
pub fn lingam_data(d: usize, n: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(&mut rng);
    let mut b = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..i {
            let w: f64 = rng.random_range(0.5..1.5);
            b[order[i]][order[j]] = if rng.random() { w } else { -w };
        }
    }
    let mut x = DMatrix::zeros(n, d);
    for r in 0..n {
        for &v in &order {
            let e: f64 = match v % 3 {
                0 => rng.random_range(-1.0..1.0),
                1 => {
                    let u: f64 = rng.random_range(-0.5..0.5);
                    -u.signum() * (1.0 - 2.0 * u.abs()).ln()
                }
                _ => -rng.random::<f64>().ln() - 1.0,
            };
            let mut val = e;
            for (p, w) in b[v].iter().enumerate() {
                if *w != 0.0 {
                    val += w * x[(r, p)];
                }
            }
            x[(r, v)] = val;
        }
    }
    (x, order)
}

pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            twice += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * p * n) as f64
}
