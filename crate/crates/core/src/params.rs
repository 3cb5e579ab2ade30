//! Parameter sets and the unconstrained coordinates the sampler works in.
//!
//! Unconstrained layout (in order):
//!
//! | block | size | transform |
//! |---|---|---|
//! | age simplex | 3 | softmax with the first logit pinned at 0 |
//! | gender probability | 1 | logit |
//! | device probability | 1 | logit |
//! | condition weights | 3 | identity |
//! | symptom `s` weights | 4 + k_s | identity |
//! | measure `m` weights, then `log σ_m` | 5 + n_symptoms + 1 | identity / log |
//!
//! Everything after the first five coordinates is the regression block that
//! NUTS samples; the confound probabilities are drawn from their conjugate
//! posteriors instead.

use serde::{Deserialize, Serialize};

use crate::dag::SymptomDag;
use crate::error::{Error, Result};
use crate::types::{AgeGroup, ModelShape};

/// Offset of the first regression coordinate in the unconstrained vector.
pub const CONFOUND_DIM: usize = 5;

/// One full parameter assignment of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub age_probs: [f64; 4],
    pub gender_prob: f64,
    pub device_prob: f64,
    /// `[intercept, age, gender]`.
    pub cond_w: [f64; 3],
    /// Per symptom: `[intercept, age, gender, condition]` then one weight per
    /// parent in ascending parent index.
    pub symp_w: Vec<Vec<f64>>,
    /// Per measure: `[intercept, age, gender, device, condition]` then one
    /// weight per symptom.
    pub meas_w: Vec<Vec<f64>>,
    pub meas_sigma: Vec<f64>,
    pub dag: SymptomDag,
}

impl ModelParams {
    /// All weights zero, uniform confounds, unit scales.
    pub fn zeros(shape: ModelShape, dag: SymptomDag) -> Result<Self> {
        if dag.len() != shape.n_symptoms {
            return Err(Error::Structural(format!(
                "graph over {} symptoms for a {}-symptom model",
                dag.len(),
                shape.n_symptoms
            )));
        }
        Ok(ModelParams {
            age_probs: [0.25; 4],
            gender_prob: 0.5,
            device_prob: 0.5,
            cond_w: [0.0; 3],
            symp_w: (0..shape.n_symptoms)
                .map(|s| vec![0.0; 4 + dag.n_parents(s)])
                .collect(),
            meas_w: vec![vec![0.0; shape.measure_width()]; shape.n_measures],
            meas_sigma: vec![1.0; shape.n_measures],
            dag,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            n_symptoms: self.symp_w.len(),
            n_measures: self.meas_w.len(),
        }
    }

    pub fn age_prob(&self, a: AgeGroup) -> f64 {
        self.age_probs[a.code() as usize]
    }

    /// Checks every invariant of the parameter set.
    pub fn validate(&self) -> Result<()> {
        let shape = self.shape();
        self.dag.validate()?;
        if self.dag.len() != shape.n_symptoms {
            return Err(Error::Structural("graph size differs from symptom count".into()));
        }
        let sum: f64 = self.age_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || self.age_probs.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "age_probs {:?} is not a positive simplex point",
                self.age_probs
            )));
        }
        for (name, p) in [("gender_prob", self.gender_prob), ("device_prob", self.device_prob)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside (0,1)")));
            }
        }
        for (s, w) in self.symp_w.iter().enumerate() {
            let k = self.dag.n_parents(s);
            if w.len() != 4 + k {
                return Err(Error::Structural(format!(
                    "symptom {s} has {} weights, expected {}",
                    w.len(),
                    4 + k
                )));
            }
        }
        if self.meas_sigma.len() != shape.n_measures {
            return Err(Error::Structural("one scale per measure required".into()));
        }
        for (m, w) in self.meas_w.iter().enumerate() {
            if w.len() != shape.measure_width() {
                return Err(Error::Structural(format!(
                    "measure {m} has {} weights, expected {}",
                    w.len(),
                    shape.measure_width()
                )));
            }
        }
        if let Some(m) = self.meas_sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("sigma[{m}] must be > 0")));
        }
        let all_finite = self.cond_w.iter().all(|w| w.is_finite())
            && self.symp_w.iter().flatten().all(|w| w.is_finite())
            && self.meas_w.iter().flatten().all(|w| w.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter("non-finite weight".into()));
        }
        Ok(())
    }
}

/// Positions of each parameter block in the flat vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    shape: ModelShape,
    dag: SymptomDag,
    symp_offsets: Vec<usize>,
    meas_offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new(shape: ModelShape, dag: &SymptomDag) -> Result<Self> {
        if dag.len() != shape.n_symptoms {
            return Err(Error::Structural("graph size differs from symptom count".into()));
        }
        let mut at = CONFOUND_DIM + 3;
        let mut symp_offsets = Vec::with_capacity(shape.n_symptoms);
        for s in 0..shape.n_symptoms {
            symp_offsets.push(at);
            at += 4 + dag.n_parents(s);
        }
        let mut meas_offsets = Vec::with_capacity(shape.n_measures);
        for _ in 0..shape.n_measures {
            meas_offsets.push(at);
            at += shape.measure_width() + 1;
        }
        Ok(ParamLayout {
            shape,
            dag: dag.clone(),
            symp_offsets,
            meas_offsets,
            total: at,
        })
    }

    pub fn for_params(p: &ModelParams) -> Result<Self> {
        ParamLayout::new(p.shape(), &p.dag)
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn dag(&self) -> &SymptomDag {
        &self.dag
    }

    /// Length of the full unconstrained vector.
    pub fn dim(&self) -> usize {
        self.total
    }

    /// Length of the regression block sampled by NUTS.
    pub fn regression_dim(&self) -> usize {
        self.total - CONFOUND_DIM
    }

    pub fn cond_offset(&self) -> usize {
        CONFOUND_DIM
    }

    pub fn symptom_offset(&self, s: usize) -> usize {
        self.symp_offsets[s]
    }

    pub fn symptom_len(&self, s: usize) -> usize {
        4 + self.dag.n_parents(s)
    }

    pub fn measure_offset(&self, m: usize) -> usize {
        self.meas_offsets[m]
    }

    /// Weights plus the log-scale.
    pub fn measure_len(&self) -> usize {
        self.shape.measure_width() + 1
    }

    /// Maps a full unconstrained vector to parameters.
    pub fn to_params(&self, theta: &[f64]) -> ModelParams {
        debug_assert_eq!(theta.len(), self.total);
        let (confounds, reg) = theta.split_at(CONFOUND_DIM);
        let age_probs = softmax_pinned(&[confounds[0], confounds[1], confounds[2]]);
        let mut p = self.regression_to_params(reg, age_probs, 0.5, 0.5);
        p.gender_prob = logistic(confounds[3]);
        p.device_prob = logistic(confounds[4]);
        p
    }

    /// Maps a regression block plus given confound probabilities to parameters.
    pub fn regression_to_params(
        &self,
        reg: &[f64],
        age_probs: [f64; 4],
        gender_prob: f64,
        device_prob: f64,
    ) -> ModelParams {
        debug_assert_eq!(reg.len(), self.regression_dim());
        let at = |i: usize| i - CONFOUND_DIM;
        let cond_w = [reg[0], reg[1], reg[2]];
        let symp_w = (0..self.shape.n_symptoms)
            .map(|s| {
                let o = at(self.symp_offsets[s]);
                reg[o..o + self.symptom_len(s)].to_vec()
            })
            .collect();
        let width = self.shape.measure_width();
        let mut meas_w = Vec::with_capacity(self.shape.n_measures);
        let mut meas_sigma = Vec::with_capacity(self.shape.n_measures);
        for &off in &self.meas_offsets {
            let o = at(off);
            meas_w.push(reg[o..o + width].to_vec());
            meas_sigma.push(reg[o + width].exp());
        }
        ModelParams {
            age_probs,
            gender_prob,
            device_prob,
            cond_w,
            symp_w,
            meas_w,
            meas_sigma,
            dag: self.dag.clone(),
        }
    }

    /// Inverse of [`ParamLayout::to_params`].
    pub fn to_unconstrained(&self, p: &ModelParams) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.total);
        theta.extend_from_slice(&softmax_pinned_inverse(&p.age_probs));
        theta.push(logit(p.gender_prob));
        theta.push(logit(p.device_prob));
        theta.extend_from_slice(&self.to_regression(p));
        theta
    }

    /// Regression block of the unconstrained vector.
    pub fn to_regression(&self, p: &ModelParams) -> Vec<f64> {
        let mut reg = Vec::with_capacity(self.regression_dim());
        reg.extend_from_slice(&p.cond_w);
        for w in &p.symp_w {
            reg.extend_from_slice(w);
        }
        for (w, s) in p.meas_w.iter().zip(&p.meas_sigma) {
            reg.extend_from_slice(w);
            reg.push(s.ln());
        }
        reg
    }

    /// Flat constrained vector (probabilities and scales on their natural
    /// scale), used for storage and diagnostics.
    pub fn to_constrained(&self, p: &ModelParams) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.total + 1);
        v.extend_from_slice(&p.age_probs);
        v.push(p.gender_prob);
        v.push(p.device_prob);
        v.extend_from_slice(&p.cond_w);
        for w in &p.symp_w {
            v.extend_from_slice(w);
        }
        for (w, s) in p.meas_w.iter().zip(&p.meas_sigma) {
            v.extend_from_slice(w);
            v.push(*s);
        }
        v
    }

    /// Length of [`ParamLayout::to_constrained`] output.
    pub fn constrained_dim(&self) -> usize {
        self.total + 1
    }

    pub fn from_constrained(&self, v: &[f64]) -> Result<ModelParams> {
        if v.len() != self.constrained_dim() {
            return Err(Error::Structural(format!(
                "flat parameter vector has {} entries, expected {}",
                v.len(),
                self.constrained_dim()
            )));
        }
        let age_probs = [v[0], v[1], v[2], v[3]];
        let mut p = self.regression_to_params(&vec![0.0; self.regression_dim()], age_probs, v[4], v[5]);
        let mut at = 6;
        p.cond_w.copy_from_slice(&v[at..at + 3]);
        at += 3;
        for w in p.symp_w.iter_mut() {
            let n = w.len();
            w.copy_from_slice(&v[at..at + n]);
            at += n;
        }
        for (w, s) in p.meas_w.iter_mut().zip(p.meas_sigma.iter_mut()) {
            let n = w.len();
            w.copy_from_slice(&v[at..at + n]);
            *s = v[at + n];
            at += n + 1;
        }
        p.validate()?;
        Ok(p)
    }

    /// Names of the constrained coordinates, aligned with
    /// [`ParamLayout::to_constrained`].
    pub fn constrained_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..4).map(|a| format!("age_probs[{a}]")).collect();
        names.push("gender_prob".into());
        names.push("device_prob".into());
        for t in ["intercept", "age", "gender"] {
            names.push(format!("cond_w.{t}"));
        }
        for s in 0..self.shape.n_symptoms {
            for t in ["intercept", "age", "gender", "condition"] {
                names.push(format!("symp_w[{s}].{t}"));
            }
            for j in self.dag.parents(s) {
                names.push(format!("symp_w[{s}].parent[{j}]"));
            }
        }
        for m in 0..self.shape.n_measures {
            for t in ["intercept", "age", "gender", "device", "condition"] {
                names.push(format!("meas_w[{m}].{t}"));
            }
            for s in 0..self.shape.n_symptoms {
                names.push(format!("meas_w[{m}].symptom[{s}]"));
            }
            names.push(format!("meas_sigma[{m}]"));
        }
        names
    }

    /// Indices (into the constrained vector) of every regression weight,
    /// excluding probabilities and scales.
    pub fn weight_indices(&self) -> Vec<usize> {
        let width = self.shape.measure_width();
        let mut idx: Vec<usize> = (6..6 + 3).collect();
        let mut at = 9;
        for s in 0..self.shape.n_symptoms {
            let n = self.symptom_len(s);
            idx.extend(at..at + n);
            at += n;
        }
        for _ in 0..self.shape.n_measures {
            idx.extend(at..at + width);
            at += width + 1;
        }
        idx
    }
}

/// `1 / (1 + e^{-x})`, evaluated without overflow for either sign.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Softmax of `[0, z_1, z_2, z_3]`.
pub fn softmax_pinned(z: &[f64; 3]) -> [f64; 4] {
    let max = z.iter().fold(0.0f64, |m, &v| m.max(v));
    let e = [(-max).exp(), (z[0] - max).exp(), (z[1] - max).exp(), (z[2] - max).exp()];
    let total: f64 = e.iter().sum();
    [e[0] / total, e[1] / total, e[2] / total, e[3] / total]
}

pub fn softmax_pinned_inverse(p: &[f64; 4]) -> [f64; 3] {
    let l0 = p[0].ln();
    [p[1].ln() - l0, p[2].ln() - l0, p[3].ln() - l0]
}
