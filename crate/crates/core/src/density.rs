//! Factor log-densities of the joint model and the parameter prior.
//!
//! The joint factorizes as
//! `p(M, S, C, A, G, D) = Π_m p(M_m | A,G,D,C,S) · Π_s p(S_s | A,G,C,P_s) · p(C | A,G) · p(A) p(G) p(D)`,
//! with logistic links for the binary nodes and Gaussian measures. Age
//! enters every linear predictor as its scalar code 0..=3.


use crate::error::{Error, Result};
use crate::params::{softplus, ModelParams};
use crate::types::{AgeGroup, CompleteCase, Condition, Device, Gender, SymptomVector};

pub use crate::params::logistic;

/// `0.5 * ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln p(x)` for `x ~ Bernoulli(logistic(eta))`.
#[inline]
pub fn log_bernoulli_logit(eta: f64, x: bool) -> f64 {
    if x {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

/// Log-density of `N(mean, sigma^2)` at `x`.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - HALF_LN_2PI
}

/// Linear predictor of the condition node.
pub fn condition_eta(p: &ModelParams, a: AgeGroup, g: Gender) -> f64 {
    p.cond_w[0] + p.cond_w[1] * a.code() as f64 + p.cond_w[2] * g.code() as f64
}

pub fn log_factor_condition(p: &ModelParams, a: AgeGroup, g: Gender, c: Condition) -> f64 {
    log_bernoulli_logit(condition_eta(p, a, g), c == Condition::Present)
}

/// Linear predictor of symptom `s`; `parents` are the parent values in
/// ascending parent index.
pub fn symptom_eta(
    p: &ModelParams,
    s: usize,
    a: AgeGroup,
    g: Gender,
    c: Condition,
    parents: &[u8],
) -> Result<f64> {
    let w = p
        .symp_w
        .get(s)
        .ok_or_else(|| Error::Structural(format!("no symptom {s}")))?;
    if parents.len() + 4 != w.len() {
        return Err(Error::Structural(format!(
            "symptom {s} takes {} parents, got {}",
            w.len() - 4,
            parents.len()
        )));
    }
    let mut eta = w[0] + w[1] * a.code() as f64 + w[2] * g.code() as f64 + w[3] * c.code() as f64;
    for (wj, &pj) in w[4..].iter().zip(parents) {
        eta += wj * pj as f64;
    }
    Ok(eta)
}

pub fn log_factor_symptom(
    p: &ModelParams,
    s: usize,
    a: AgeGroup,
    g: Gender,
    c: Condition,
    parents: &[u8],
    value: u8,
) -> Result<f64> {
    if value > 1 {
        return Err(Error::value(format!("symptom {s}"), "not binary"));
    }
    Ok(log_bernoulli_logit(symptom_eta(p, s, a, g, c, parents)?, value == 1))
}

/// Mean of measure `m` given its parents.
pub fn measure_mean(
    p: &ModelParams,
    m: usize,
    a: AgeGroup,
    g: Gender,
    d: Device,
    c: Condition,
    s: &SymptomVector,
) -> Result<f64> {
    let w = p
        .meas_w
        .get(m)
        .ok_or_else(|| Error::Structural(format!("no measure {m}")))?;
    if s.len() + 5 != w.len() {
        return Err(Error::Structural(format!(
            "measure {m} takes {} symptoms, got {}",
            w.len() - 5,
            s.len()
        )));
    }
    let mut mean = w[0]
        + w[1] * a.code() as f64
        + w[2] * g.code() as f64
        + w[3] * d.code() as f64
        + w[4] * c.code() as f64;
    for (ws, &v) in w[5..].iter().zip(s.values()) {
        mean += ws * v as f64;
    }
    Ok(mean)
}

#[allow(clippy::too_many_arguments)]
pub fn log_factor_measure(
    p: &ModelParams,
    m: usize,
    a: AgeGroup,
    g: Gender,
    d: Device,
    c: Condition,
    s: &SymptomVector,
    value: f64,
) -> Result<f64> {
    let sigma = p.meas_sigma[m];
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma[{m}] = {sigma}")));
    }
    if !value.is_finite() {
        return Err(Error::value(format!("measure {m}"), "not finite"));
    }
    Ok(log_normal_pdf(value, measure_mean(p, m, a, g, d, c, s)?, sigma))
}

pub fn log_factor_age(p: &ModelParams, a: AgeGroup) -> f64 {
    p.age_prob(a).ln()
}

pub fn log_factor_gender(p: &ModelParams, g: Gender) -> f64 {
    match g {
        Gender::Female => p.gender_prob.ln(),
        Gender::Male => (-p.gender_prob).ln_1p(),
    }
}

pub fn log_factor_device(p: &ModelParams, d: Device) -> f64 {
    match d {
        Device::Pc => p.device_prob.ln(),
        Device::Smartphone => (-p.device_prob).ln_1p(),
    }
}

/// Every factor log-density of a complete case, in model order:
/// measures, symptoms, condition, age, gender, device.
pub fn log_joint_terms(p: &ModelParams, case: &CompleteCase) -> Result<Vec<f64>> {
    let shape = p.shape();
    case.check_shape(&shape)?;
    let (a, g, d, c) = (case.age, case.gender, case.device, case.condition);
    let mut terms = Vec::with_capacity(shape.n_measures + shape.n_symptoms + 4);
    for (m, &y) in case.measures.iter().enumerate() {
        terms.push(log_factor_measure(p, m, a, g, d, c, &case.symptoms, y)?);
    }
    for s in 0..shape.n_symptoms {
        let parents: Vec<u8> = p.dag.parents(s).iter().map(|&j| case.symptoms.get(j)).collect();
        terms.push(log_factor_symptom(p, s, a, g, c, &parents, case.symptoms.get(s))?);
    }
    terms.push(log_factor_condition(p, a, g, c));
    terms.push(log_factor_age(p, a));
    terms.push(log_factor_gender(p, g));
    terms.push(log_factor_device(p, d));
    Ok(terms)
}

/// Log of the joint density of one fully observed case.
pub fn log_joint(p: &ModelParams, case: &CompleteCase) -> Result<f64> {
    Ok(log_joint_terms(p, case)?.iter().sum())
}

/// Sum of [`log_joint`] over a dataset.
pub fn log_likelihood(p: &ModelParams, cases: &[CompleteCase]) -> Result<f64> {
    cases.iter().map(|c| log_joint(p, c)).sum()
}

/// Log prior density on the constrained parameters:
/// Dirichlet(1,1,1,1) on the age probabilities, Beta(1,1) on the gender
/// and device probabilities, N(0,1) on every weight and LogNormal(0,1) on
/// every measure scale. Returns `-inf` outside the support, never NaN.
pub fn log_prior(p: &ModelParams) -> f64 {
    let simplex_ok = p.age_probs.iter().all(|&q| q > 0.0 && q < 1.0)
        && (p.age_probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
    let unit_ok = [p.gender_prob, p.device_prob].iter().all(|&q| q > 0.0 && q < 1.0);
    let sigma_ok = p.meas_sigma.iter().all(|&s| s > 0.0 && s.is_finite());
    let weights = p
        .cond_w
        .iter()
        .chain(p.symp_w.iter().flatten())
        .chain(p.meas_w.iter().flatten());
    let mut weights_ok = true;
    let mut lp = 0.0;
    for &w in weights {
        weights_ok &= w.is_finite();
        lp += -0.5 * w * w - HALF_LN_2PI;
    }
    if !(simplex_ok && unit_ok && sigma_ok && weights_ok) {
        return f64::NEG_INFINITY;
    }
    // Dirichlet(1) density on the 3-simplex is Γ(4) = 6.
    lp += 6f64.ln();
    for &s in &p.meas_sigma {
        let ls = s.ln();
        lp += -ls - HALF_LN_2PI - 0.5 * ls * ls;
    }
    lp
}
