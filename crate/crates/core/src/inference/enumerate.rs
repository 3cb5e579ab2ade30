//! Exact posterior over the unobserved discrete variables for one parameter
//! set.
//!
//! Every assignment of the unobserved confounds, condition and symptoms is
//! weighted by the product of all discrete factors and the Gaussian
//! densities of the observed measures. Unobserved measures are leaves and
//! drop out of the sum.

use crate::density::{log_bernoulli_logit, HALF_LN_2PI};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::types::{AgeGroup, Condition, Device, Gender, ModelShape};

use super::evidence::{Evidence, Target};

/// One row of the enumeration table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub age: AgeGroup,
    pub gender: Gender,
    pub device: Device,
    pub condition: Condition,
    /// Bit `s` holds symptom `s`.
    pub symptoms: u32,
}

impl Assignment {
    /// Value of `t` in this row, as a code.
    pub fn value(&self, t: Target) -> usize {
        match t {
            Target::Age => self.age.code() as usize,
            Target::Gender => self.gender.code() as usize,
            Target::Device => self.device.code() as usize,
            Target::Condition => self.condition.code() as usize,
            Target::Symptom(s) => (self.symptoms >> s & 1) as usize,
        }
    }
}

/// Normalized enumeration result.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumTable {
    pub rows: Vec<Assignment>,
    /// Unnormalized log weights, aligned with `rows`.
    pub log_weights: Vec<f64>,
    pub probs: Vec<f64>,
    /// Log of the sum of the unnormalized weights.
    pub log_evidence: f64,
}

impl EnumTable {
    fn from_weights(rows: Vec<Assignment>, log_weights: Vec<f64>) -> Result<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("evidence has zero probability under the model".into()));
        }
        let mut probs: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(EnumTable {
            rows,
            log_weights,
            probs,
            log_evidence: max + total.ln(),
        })
    }

    /// Marginal distribution of `t` over its codes.
    pub fn marginal(&self, t: Target) -> Vec<f64> {
        let mut out = vec![0.0; t.arity()];
        for (row, p) in self.rows.iter().zip(&self.probs) {
            out[row.value(t)] += p;
        }
        out
    }
}

/// Per-parameter-set lookup tables for fast repeated enumeration.
///
/// `sym[(a, g, c)][mask]` holds the joint log mass of a symptom pattern and
/// `meas_sym[mask][m]` the symptom contribution to measure `m`'s mean.
#[derive(Debug, Clone)]
pub struct PreparedParams {
    params: ModelParams,
    n_masks: usize,
    sym: Vec<f64>,
    ready: [bool; 16],
    meas_sym: Vec<f64>,
    log_age: [f64; 4],
    log_gender: [f64; 2],
    log_device: [f64; 2],
    cond: [[f64; 2]; 8],
}

fn agc(a: usize, g: usize, c: usize) -> usize {
    (a * 2 + g) * 2 + c
}

fn codes(observed: Option<u8>, n: usize) -> std::ops::Range<usize> {
    match observed {
        Some(v) => v as usize..v as usize + 1,
        None => 0..n,
    }
}

impl PreparedParams {
    /// Tables for every confound and condition combination.
    pub fn new(params: &ModelParams) -> Self {
        Self::build(params, |_, _, _| true)
    }

    /// Tables only for combinations consistent with `ev`; enough to answer
    /// queries with the same confound and condition evidence.
    pub fn for_evidence(params: &ModelParams, ev: &Evidence) -> Self {
        let ok = |v: usize, o: Option<u8>| o.is_none_or(|o| o as usize == v);
        Self::build(params, |a, g, c| {
            ok(a, ev.age.map(|x| x.code()))
                && ok(g, ev.gender.map(|x| x.code()))
                && ok(c, ev.condition.map(|x| x.code()))
        })
    }

    fn build(p: &ModelParams, want: impl Fn(usize, usize, usize) -> bool) -> Self {
        let shape = p.shape();
        let n_sym = shape.n_symptoms;
        let n_masks = 1usize << n_sym;
        let parents: Vec<Vec<usize>> = (0..n_sym).map(|s| p.dag.parents(s)).collect();

        let mut sym = vec![f64::NAN; 16 * n_masks];
        let mut ready = [false; 16];
        for a in 0..4 {
            for g in 0..2 {
                for c in 0..2 {
                    if !want(a, g, c) {
                        continue;
                    }
                    let k = agc(a, g, c);
                    ready[k] = true;
                    let base: Vec<f64> = p
                        .symp_w
                        .iter()
                        .map(|w| w[0] + w[1] * a as f64 + w[2] * g as f64 + w[3] * c as f64)
                        .collect();
                    let row = &mut sym[k * n_masks..(k + 1) * n_masks];
                    for (mask, out) in row.iter_mut().enumerate() {
                        let mut lp = 0.0;
                        for s in 0..n_sym {
                            let w = &p.symp_w[s];
                            let mut eta = base[s];
                            for (j, &par) in parents[s].iter().enumerate() {
                                if mask >> par & 1 == 1 {
                                    eta += w[4 + j];
                                }
                            }
                            lp += log_bernoulli_logit(eta, mask >> s & 1 == 1);
                        }
                        *out = lp;
                    }
                }
            }
        }

        let n_meas = shape.n_measures;
        let mut meas_sym = vec![0.0; n_masks * n_meas];
        for mask in 1..n_masks {
            let low = mask.trailing_zeros() as usize;
            let prev = mask & (mask - 1);
            for m in 0..n_meas {
                meas_sym[mask * n_meas + m] = meas_sym[prev * n_meas + m] + p.meas_w[m][5 + low];
            }
        }

        let mut cond = [[0.0; 2]; 8];
        for a in 0..4 {
            for g in 0..2 {
                let eta = p.cond_w[0] + p.cond_w[1] * a as f64 + p.cond_w[2] * g as f64;
                cond[a * 2 + g] = [log_bernoulli_logit(eta, false), log_bernoulli_logit(eta, true)];
            }
        }

        PreparedParams {
            params: p.clone(),
            n_masks,
            sym,
            ready,
            meas_sym,
            log_age: p.age_probs.map(f64::ln),
            log_gender: [(-p.gender_prob).ln_1p(), p.gender_prob.ln()],
            log_device: [(-p.device_prob).ln_1p(), p.device_prob.ln()],
            cond,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn shape(&self) -> ModelShape {
        self.params.shape()
    }

    /// Calls `f` with every assignment consistent with `ev` and its
    /// unnormalized log weight.
    pub fn for_each_row(&self, ev: &Evidence, mut f: impl FnMut(Assignment, f64)) -> Result<()> {
        let shape = self.shape();
        ev.validate(&shape)?;
        let p = &self.params;
        let n_meas = shape.n_measures;
        let obs: Vec<(usize, f64)> = ev.measures.iter().map(|(&m, &x)| (m, x)).collect();
        let half_prec: Vec<f64> = obs
            .iter()
            .map(|&(m, _)| 0.5 / (p.meas_sigma[m] * p.meas_sigma[m]))
            .collect();
        let norm: f64 = obs.iter().map(|&(m, _)| -p.meas_sigma[m].ln() - HALF_LN_2PI).sum();
        let (sym_obs, sym_val) = ev.symptom_masks();
        let mut resid = vec![0.0; obs.len()];

        for a in codes(ev.age.map(|v| v.code()), 4) {
            for g in codes(ev.gender.map(|v| v.code()), 2) {
                for d in codes(ev.device.map(|v| v.code()), 2) {
                    for c in codes(ev.condition.map(|v| v.code()), 2) {
                        let k = agc(a, g, c);
                        if !self.ready[k] {
                            return Err(Error::Structural(
                                "tables were prepared for different confound evidence".into(),
                            ));
                        }
                        let base = self.log_age[a]
                            + self.log_gender[g]
                            + self.log_device[d]
                            + self.cond[a * 2 + g][c]
                            + norm;
                        for (r, &(m, x)) in resid.iter_mut().zip(&obs) {
                            let w = &p.meas_w[m];
                            *r = x - (w[0] + w[1] * a as f64 + w[2] * g as f64 + w[3] * d as f64 + w[4] * c as f64);
                        }
                        let sym = &self.sym[k * self.n_masks..(k + 1) * self.n_masks];
                        let row = Assignment {
                            age: AgeGroup::new(a as u8)?,
                            gender: Gender::from_bit(g == 1),
                            device: Device::from_bit(d == 1),
                            condition: Condition::from_bit(c == 1),
                            symptoms: 0,
                        };
                        for mask in 0..self.n_masks {
                            if mask as u32 & sym_obs != sym_val {
                                continue;
                            }
                            let contrib = &self.meas_sym[mask * n_meas..(mask + 1) * n_meas];
                            let mut lw = base + sym[mask];
                            for ((&(m, _), r), h) in obs.iter().zip(&resid).zip(&half_prec) {
                                let z = r - contrib[m];
                                lw -= h * z * z;
                            }
                            f(Assignment { symptoms: mask as u32, ..row }, lw);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Normalized table over every assignment consistent with `ev`.
    pub fn table(&self, ev: &Evidence) -> Result<EnumTable> {
        if ev.is_discrete_complete(&self.shape()) {
            return Err(Error::EmptyQuery);
        }
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        self.for_each_row(ev, |row, lw| {
            rows.push(row);
            weights.push(lw);
        })?;
        EnumTable::from_weights(rows, weights)
    }

    /// Marginals of each target; errors if a target is observed.
    pub fn marginals(&self, ev: &Evidence, targets: &[Target]) -> Result<Vec<Vec<f64>>> {
        check_targets(&self.shape(), ev, targets)?;
        let table = self.table(ev)?;
        Ok(targets.iter().map(|&t| table.marginal(t)).collect())
    }
}

pub(crate) fn check_targets(shape: &ModelShape, ev: &Evidence, targets: &[Target]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::EmptyQuery);
    }
    for &t in targets {
        t.check(shape)?;
        if ev.observes(t) {
            return Err(Error::EvidenceTargetOverlap(t.name()));
        }
    }
    Ok(())
}

/// Exact posterior table of the unobserved discrete variables given `ev`.
pub fn enumerate_posterior(p: &ModelParams, ev: &Evidence) -> Result<EnumTable> {
    ev.validate(&p.shape())?;
    if ev.is_discrete_complete(&p.shape()) {
        return Err(Error::EmptyQuery);
    }
    PreparedParams::for_evidence(p, ev).table(ev)
}
