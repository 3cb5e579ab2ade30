//! Log posterior over the unconstrained parameters with analytic gradients.
//!
//! With fully observed data every factor is a logistic or Gaussian
//! regression with discrete covariates, so the likelihood is evaluated from
//! sufficient statistics: distinct covariate patterns with counts for the
//! logistic nodes, and `XᵀX`, `Xᵀy`, `yᵀy` for each measure. Cost per
//! gradient is independent of the number of cases.

use std::collections::BTreeMap;

use crate::dag::SymptomDag;
use crate::density::HALF_LN_2PI;
use crate::error::{Error, Result};
use crate::nuts::LogDensity;
use crate::params::{logistic, softmax_pinned, softplus, ParamLayout, CONFOUND_DIM};
use crate::types::{CompleteCase, ModelShape};

/// Covariate patterns and success counts of a logistic factor.
#[derive(Debug, Clone)]
struct LogisticStats {
    width: usize,
    x: Vec<f64>,
    n: Vec<f64>,
    n1: Vec<f64>,
}

impl LogisticStats {
    fn from_rows(width: usize, rows: impl Iterator<Item = (Vec<u8>, bool)>) -> Self {
        let mut groups: BTreeMap<Vec<u8>, (f64, f64)> = BTreeMap::new();
        for (key, y) in rows {
            let e = groups.entry(key).or_insert((0.0, 0.0));
            e.0 += 1.0;
            if y {
                e.1 += 1.0;
            }
        }
        let mut stats = LogisticStats {
            width,
            x: Vec::with_capacity(groups.len() * width),
            n: Vec::with_capacity(groups.len()),
            n1: Vec::with_capacity(groups.len()),
        };
        for (key, (n, n1)) in groups {
            stats.x.push(1.0);
            stats.x.extend(key.iter().map(|&v| v as f64));
            stats.n.push(n);
            stats.n1.push(n1);
        }
        stats
    }

    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for (g, &wi) in grad.iter_mut().zip(w) {
            lp += -0.5 * wi * wi - HALF_LN_2PI;
            *g = -wi;
        }
        for (r, x) in self.x.chunks_exact(self.width).enumerate() {
            let eta: f64 = x.iter().zip(w).map(|(a, b)| a * b).sum();
            let (n, n1) = (self.n[r], self.n1[r]);
            lp += n1 * eta - n * softplus(eta);
            let resid = n1 - n * logistic(eta);
            for (g, &xi) in grad.iter_mut().zip(x) {
                *g += resid * xi;
            }
        }
        lp
    }
}

/// Gaussian regression sufficient statistics.
#[derive(Debug, Clone)]
struct GaussianStats {
    width: usize,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    n: f64,
}

impl GaussianStats {
    fn new(width: usize) -> Self {
        GaussianStats {
            width,
            xtx: vec![0.0; width * width],
            xty: vec![0.0; width],
            yty: 0.0,
            n: 0.0,
        }
    }

    fn push(&mut self, x: &[f64], y: f64) {
        let p = self.width;
        for i in 0..p {
            self.xty[i] += x[i] * y;
            for j in 0..p {
                self.xtx[i * p + j] += x[i] * x[j];
            }
        }
        self.yty += y * y;
        self.n += 1.0;
    }

    /// `w` holds the regression weights followed by `log σ`.
    fn eval(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.width;
        let (beta, u) = (&w[..p], w[p]);
        let inv_var = (-2.0 * u).exp();
        let mut quad = self.yty;
        let mut lp = 0.0;
        for i in 0..p {
            let row = &self.xtx[i * p..(i + 1) * p];
            let xtxw: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            quad += beta[i] * (xtxw - 2.0 * self.xty[i]);
            grad[i] = (self.xty[i] - xtxw) * inv_var - beta[i];
            lp += -0.5 * beta[i] * beta[i] - HALF_LN_2PI;
        }
        // log σ ~ N(0,1) once the LogNormal prior meets the exp Jacobian.
        lp += -0.5 * u * u - HALF_LN_2PI;
        lp += -self.n * u - self.n * HALF_LN_2PI - 0.5 * quad * inv_var;
        grad[p] = -self.n + quad * inv_var - u;
        lp
    }
}

/// One independent factor of the regression posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Condition,
    Symptom(usize),
    Measure(usize),
}

/// The full log posterior of a complete-case dataset.
#[derive(Debug, Clone)]
pub struct LogPosterior {
    layout: ParamLayout,
    n_cases: usize,
    age_counts: [f64; 4],
    n_female: f64,
    n_pc: f64,
    cond: LogisticStats,
    symptoms: Vec<LogisticStats>,
    measures: Vec<GaussianStats>,
}

impl LogPosterior {
    pub fn new(shape: ModelShape, dag: &SymptomDag, cases: &[CompleteCase]) -> Result<Self> {
        let layout = ParamLayout::new(shape, dag)?;
        for (i, c) in cases.iter().enumerate() {
            c.check_shape(&shape)
                .map_err(|e| Error::Structural(format!("case {i}: {e}")))?;
        }
        let mut age_counts = [0.0; 4];
        let mut n_female = 0.0;
        let mut n_pc = 0.0;
        for c in cases {
            age_counts[c.age.code() as usize] += 1.0;
            n_female += c.gender.code() as f64;
            n_pc += c.device.code() as f64;
        }
        let cond = LogisticStats::from_rows(
            3,
            cases
                .iter()
                .map(|c| (vec![c.age.code(), c.gender.code()], c.condition.code() == 1)),
        );
        let symptoms = (0..shape.n_symptoms)
            .map(|s| {
                let parents = dag.parents(s);
                LogisticStats::from_rows(
                    4 + parents.len(),
                    cases.iter().map(|c| {
                        let mut key = vec![c.age.code(), c.gender.code(), c.condition.code()];
                        key.extend(parents.iter().map(|&j| c.symptoms.get(j)));
                        (key, c.symptoms.get(s) == 1)
                    }),
                )
            })
            .collect();
        let width = shape.measure_width();
        let mut measures = vec![GaussianStats::new(width); shape.n_measures];
        let mut x = vec![0.0; width];
        for c in cases {
            x[0] = 1.0;
            x[1] = c.age.code() as f64;
            x[2] = c.gender.code() as f64;
            x[3] = c.device.code() as f64;
            x[4] = c.condition.code() as f64;
            for s in 0..shape.n_symptoms {
                x[5 + s] = c.symptoms.get(s) as f64;
            }
            for (stats, &y) in measures.iter_mut().zip(&c.measures) {
                stats.push(&x, y);
            }
        }
        Ok(LogPosterior {
            layout,
            n_cases: cases.len(),
            age_counts,
            n_female,
            n_pc,
            cond,
            symptoms,
            measures,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn n_cases(&self) -> usize {
        self.n_cases
    }

    pub fn age_counts(&self) -> [f64; 4] {
        self.age_counts
    }

    pub fn n_female(&self) -> f64 {
        self.n_female
    }

    pub fn n_pc(&self) -> f64 {
        self.n_pc
    }

    /// Log posterior (up to the evidence constant) at a full unconstrained
    /// vector, including transform Jacobians; writes the gradient.
    pub fn log_density_grad_full(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(theta.len(), self.layout.dim());
        assert_eq!(grad.len(), theta.len());
        let (gc, gr) = grad.split_at_mut(CONFOUND_DIM);
        let lp_confounds = self.confound_block(&theta[..CONFOUND_DIM], gc);
        let lp_reg = self.regression_log_density_grad(&theta[CONFOUND_DIM..], gr);
        let lp = lp_confounds + lp_reg;
        if lp.is_finite() {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn log_density_full(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; theta.len()];
        self.log_density_grad_full(theta, &mut g)
    }

    /// Alias matching the operation name used across the crate docs.
    pub fn grad_log_posterior(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; theta.len()];
        let lp = self.log_density_grad_full(theta, &mut g);
        (lp, g)
    }

    fn confound_block(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        // Dirichlet(1) x multinomial x softmax Jacobian: Σ (n_k + 1) ln π_k + ln 6.
        let probs = softmax_pinned(&[z[0], z[1], z[2]]);
        let weights: Vec<f64> = self.age_counts.iter().map(|n| n + 1.0).collect();
        let total: f64 = weights.iter().sum();
        let mut lp = 6f64.ln();
        for k in 0..4 {
            lp += weights[k] * probs[k].ln();
        }
        for j in 0..3 {
            grad[j] = weights[j + 1] - total * probs[j + 1];
        }
        // Beta(1,1) x binomial x logistic Jacobian.
        let n = self.n_cases as f64;
        for (i, k) in [(3, self.n_female), (4, self.n_pc)] {
            let u = z[i];
            lp += -(k + 1.0) * softplus(-u) - (n - k + 1.0) * softplus(u);
            grad[i] = (k + 1.0) - (n + 2.0) * logistic(u);
        }
        lp
    }

    fn block_range(&self, b: Block) -> std::ops::Range<usize> {
        let (start, len) = match b {
            Block::Condition => (self.layout.cond_offset(), 3),
            Block::Symptom(s) => (self.layout.symptom_offset(s), self.layout.symptom_len(s)),
            Block::Measure(m) => (self.layout.measure_offset(m), self.layout.measure_len()),
        };
        start - CONFOUND_DIM..start - CONFOUND_DIM + len
    }

    /// Every regression block in layout order.
    pub fn blocks(&self) -> Vec<Block> {
        let shape = self.layout.shape();
        std::iter::once(Block::Condition)
            .chain((0..shape.n_symptoms).map(Block::Symptom))
            .chain((0..shape.n_measures).map(Block::Measure))
            .collect()
    }

    /// Range of a block inside the regression vector.
    pub fn regression_range(&self, b: Block) -> std::ops::Range<usize> {
        self.block_range(b)
    }

    fn eval_block(&self, b: Block, w: &[f64], grad: &mut [f64]) -> f64 {
        match b {
            Block::Condition => self.cond.eval(w, grad),
            Block::Symptom(s) => self.symptoms[s].eval(w, grad),
            Block::Measure(m) => self.measures[m].eval(w, grad),
        }
    }

    /// Log posterior of the regression block (weights and log-scales).
    pub fn regression_log_density_grad(&self, reg: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for b in self.blocks() {
            let r = self.block_range(b);
            lp += self.eval_block(b, &reg[r.clone()], &mut grad[r]);
        }
        lp
    }

    /// The regression posterior as a sampler target.
    pub fn regression_target(&self) -> RegressionTarget<'_> {
        RegressionTarget { post: self }
    }

    /// One factor's posterior as an independent sampler target.
    pub fn block_target(&self, block: Block) -> BlockTarget<'_> {
        BlockTarget { post: self, block }
    }
}

/// Sampler view over the regression block of a [`LogPosterior`].
#[derive(Debug, Clone, Copy)]
pub struct RegressionTarget<'a> {
    post: &'a LogPosterior,
}

impl LogDensity for RegressionTarget<'_> {
    fn dim(&self) -> usize {
        self.post.layout.regression_dim()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let lp = self.post.regression_log_density_grad(x, grad);
        if lp.is_finite() {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Sampler view over one factor block.
#[derive(Debug, Clone, Copy)]
pub struct BlockTarget<'a> {
    post: &'a LogPosterior,
    block: Block,
}

impl LogDensity for BlockTarget<'_> {
    fn dim(&self) -> usize {
        self.post.block_range(self.block).len()
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let lp = self.post.eval_block(self.block, x, grad);
        if lp.is_finite() {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }
}
