use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::dag::SymptomDag;
use crate::error::{Error, Result};
use crate::nuts::diagnostics::{diagnostics, ParamDiagnostics};
use crate::nuts::{nuts_sample, McmcConfig};
use crate::params::{ModelParams, ParamLayout};
use crate::posterior::LogPosterior;
use crate::types::{CompleteCase, ModelShape};

use super::evidence::{Evidence, Target};
use super::predict::{predict, PredictionResult};

/// Fitted posterior: parameter draws grouped by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub chains: Vec<Vec<ModelParams>>,
    /// Per constrained coordinate (see [`ParamLayout::constrained_names`]);
    /// `None` with fewer than 2 chains or 4 draws per chain.
    pub diagnostics: Option<Vec<ParamDiagnostics>>,
    pub divergences: Vec<usize>,
    pub step_sizes: Vec<f64>,
}

impl PosteriorDraws {
    /// Groups draws by chain and computes convergence diagnostics.
    pub fn new(chains: Vec<Vec<ModelParams>>, divergences: Vec<usize>, step_sizes: Vec<f64>) -> Result<Self> {
        let first = chains
            .first()
            .and_then(|c| c.first())
            .ok_or_else(|| Error::InsufficientData("no draws".into()))?;
        let n = chains[0].len();
        if chains.iter().any(|c| c.len() != n) {
            return Err(Error::Structural("chains hold different numbers of draws".into()));
        }
        if chains.iter().flatten().any(|p| p.dag != first.dag) {
            return Err(Error::Structural("draws disagree on the symptom graph".into()));
        }
        let layout = ParamLayout::for_params(first)?;
        let diagnostics = if chains.len() >= 2 && n >= 4 {
            let flat: Vec<Vec<Vec<f64>>> = chains
                .iter()
                .map(|c| c.iter().map(|p| layout.to_constrained(p)).collect())
                .collect();
            Some(diagnostics(&flat)?)
        } else {
            None
        };
        Ok(PosteriorDraws {
            chains,
            diagnostics,
            divergences,
            step_sizes,
        })
    }

    pub fn first(&self) -> &ModelParams {
        &self.chains[0][0]
    }

    pub fn dag(&self) -> &SymptomDag {
        &self.first().dag
    }

    pub fn shape(&self) -> ModelShape {
        self.first().shape()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::for_params(self.first()).expect("draws were validated on construction")
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    /// All draws, chain after chain.
    pub fn all(&self) -> Vec<ModelParams> {
        self.chains.iter().flatten().cloned().collect()
    }

    /// About `n` draws evenly spaced through the pooled draws.
    pub fn thinned(&self, n: usize) -> Vec<ModelParams> {
        let all: Vec<&ModelParams> = self.chains.iter().flatten().collect();
        if n == 0 || n >= all.len() {
            return all.into_iter().cloned().collect();
        }
        (0..n).map(|i| all[i * all.len() / n].clone()).collect()
    }

    /// `chains[c][i]` as constrained flat vectors.
    pub fn constrained(&self) -> Vec<Vec<Vec<f64>>> {
        let layout = self.layout();
        self.chains
            .iter()
            .map(|c| c.iter().map(|p| layout.to_constrained(p)).collect())
            .collect()
    }

    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.diagnostics
            .as_ref()
            .map(|d| d.iter().map(|x| x.rhat).filter(|r| r.is_finite()).fold(1.0, f64::max))
    }

    pub fn predict(&self, ev: &Evidence, targets: &[Target]) -> Result<PredictionResult> {
        predict(&self.all(), ev, targets)
    }
}

/// Draws from the exact posteriors of the confound probabilities:
/// `Dirichlet(1 + age counts)`, `Beta(1 + k, 1 + n - k)` for gender and device.
pub fn conjugate_confounds(post: &LogPosterior, rng: &mut ChaCha8Rng) -> ([f64; 4], f64, f64) {
    let counts = post.age_counts();
    let mut g: [f64; 4] = counts.map(|n| Gamma::new(1.0 + n, 1.0).expect("shape >= 1").sample(rng));
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let n = post.n_cases() as f64;
    let beta = |k: f64, rng: &mut ChaCha8Rng| Beta::new(1.0 + k, 1.0 + n - k).expect("positive shapes").sample(rng);
    let gender = beta(post.n_female(), rng);
    let device = beta(post.n_pc(), rng);
    (g, gender, device)
}

fn clamp_open(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Samples the posterior of every parameter given fully observed cases:
/// NUTS on the regression weights and scales, exact conjugate draws for the
/// confound probabilities.
pub fn fit(cases: &[CompleteCase], dag: &SymptomDag, cfg: &McmcConfig) -> Result<PosteriorDraws> {
    let first = cases
        .first()
        .ok_or_else(|| Error::InsufficientData("cannot fit on an empty dataset".into()))?;
    let shape = ModelShape::new(dag.len(), first.measures.len())?;
    let post = LogPosterior::new(shape, dag, cases)?;
    let layout = post.layout().clone();
    let outputs = nuts_sample(&post.regression_target(), None, cfg)?;

    let mut chains = Vec::with_capacity(outputs.len());
    for (c, out) in outputs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1_000_000 + c as u64);
        let draws = out
            .draws
            .iter()
            .map(|reg| {
                let (age, mut g, mut d) = conjugate_confounds(&post, &mut rng);
                g = clamp_open(g);
                d = clamp_open(d);
                let age = age.map(|a| a.max(f64::MIN_POSITIVE));
                layout.regression_to_params(reg, age, g, d)
            })
            .collect();
        chains.push(draws);
    }
    PosteriorDraws::new(
        chains,
        outputs.iter().map(|o| o.divergences).collect(),
        outputs.iter().map(|o| o.step_size).collect(),
    )
}
