//! No-U-Turn sampler with multinomial trajectory sampling.
//!
//! Each transition doubles a leapfrog trajectory forward or backward in
//! time until the generalized U-turn criterion fires on the whole
//! trajectory or on any merged subtree, the energy error exceeds
//! [`MAX_DELTA_H`], or the depth cap is hit. The next state is drawn from
//! the trajectory with probability proportional to `exp(-H)`: biased
//! progressive sampling between subtrees at the top level, uniform
//! progressive sampling inside subtrees.
//!
//! Warmup adapts the step size by dual averaging and a diagonal inverse
//! metric from windowed variance estimates; the step size is frozen at its
//! averaged value afterwards.

mod adapt;
pub mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adapt::{DualAverage, WindowedMetric};

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

/// A differentiable log density on `R^n`.
///
/// Out-of-support points return `f64::NEG_INFINITY`; the sampler treats
/// them as divergent. Implementations must not return NaN.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Returns the log density at `x` and writes its gradient into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> LogDensity for (usize, F)
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.0
    }
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.1)(x, grad)
    }
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup_draws: usize,
    pub kept_draws: usize,
    pub target_accept: f64,
    /// Subtrees of depth `0..=max_tree_depth` may be added, so a value of 0
    /// means a single leapfrog step per transition.
    pub max_tree_depth: usize,
    pub seed: u64,
    /// Half-width of the uniform box random initial points are drawn from.
    pub init_radius: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            warmup_draws: 1000,
            kept_draws: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            init_radius: 2.0,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::value("chains", "must be at least 1"));
        }
        if self.kept_draws == 0 {
            return Err(Error::value("kept_draws", "must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::value("target_accept", "must lie in (0,1)"));
        }
        if !(self.init_radius >= 0.0) {
            return Err(Error::value("init_radius", "must be non-negative"));
        }
        Ok(())
    }
}

/// Per-transition statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub tree_depth: usize,
    pub divergent: bool,
    pub energy: f64,
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    /// Kept draws, one vector per iteration.
    pub draws: Vec<Vec<f64>>,
    pub stats: Vec<TransitionStats>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub warmup_divergences: usize,
    pub divergences: usize,
}

impl ChainOutput {
    pub fn mean_accept(&self) -> f64 {
        self.stats.iter().map(|s| s.accept_stat).sum::<f64>() / self.stats.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    grad: Vec<f64>,
    logp: f64,
}

impl Point {
    fn kinetic(&self, inv_metric: &[f64]) -> f64 {
        0.5 * self.p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, inv_metric: &[f64]) -> f64 {
        let h = -self.logp + self.kinetic(inv_metric);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, inv_metric: &[f64]) -> Vec<f64> {
        self.p.iter().zip(inv_metric).map(|(p, m)| p * m).collect()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// One leapfrog step of size `eps` (negative to integrate backward).
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    inv_metric: &[f64],
    eps: f64,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
) -> f64 {
    for i in 0..q.len() {
        p[i] += 0.5 * eps * grad[i];
    }
    for i in 0..q.len() {
        q[i] += eps * inv_metric[i] * p[i];
    }
    let logp = target.log_density_grad(q, grad);
    for i in 0..q.len() {
        p[i] += 0.5 * eps * grad[i];
    }
    logp
}

struct Integrator<'a, T: ?Sized, R> {
    target: &'a T,
    inv_metric: &'a [f64],
    eps: f64,
    rng: &'a mut R,
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

impl<T: LogDensity + ?Sized, R: Rng> Integrator<'_, T, R> {
    fn step(&mut self, z: &mut Point, sign: f64) {
        z.logp = leapfrog(self.target, self.inv_metric, sign * self.eps, &mut z.q, &mut z.p, &mut z.grad);
    }

    /// Builds a subtree of `2^depth` leapfrog steps starting from `z`.
    /// On return `z` is the subtree's outermost point.
    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut Vec<f64>,
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.step(z, sign);
            self.n_leapfrog += 1;
            let h = z.hamiltonian(self.inv_metric);
            if h - self.h0 > MAX_DELTA_H || !h.is_finite() {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, self.h0 - h);
            self.sum_metro_prob += if self.h0 - h > 0.0 { 1.0 } else { (self.h0 - h).exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = z.p_sharp(self.inv_metric);
            p_sharp_end.clone_from(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }

        let dim = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; dim];
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            sign,
            &mut lsw_init,
        );
        if !valid_init {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; dim];
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            sign,
            &mut lsw_final,
        );
        if !valid_final {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = no_u_turn(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_ext = add(&rho_init, &p_final_beg);
        persist &= no_u_turn(p_sharp_beg, &p_sharp_final_beg, &rho_ext);
        let rho_ext = add(&rho_final, &p_init_end);
        persist &= no_u_turn(&p_sharp_init_end, p_sharp_end, &rho_ext);
        persist
    }
}

/// One NUTS transition from `z` (momentum is resampled). Updates `z` in place.
fn transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    inv_metric: &[f64],
    eps: f64,
    max_depth: usize,
    z: &mut Point,
    rng: &mut R,
) -> TransitionStats {
    let dim = z.q.len();
    for i in 0..dim {
        let n: f64 = rng.sample(StandardNormal);
        z.p[i] = n / inv_metric[i].sqrt();
    }
    let h0 = z.hamiltonian(inv_metric);
    let p_sharp = z.p_sharp(inv_metric);

    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();

    let mut p_fwd_fwd = z.p.clone();
    let mut p_sharp_fwd_fwd = p_sharp.clone();
    let mut p_fwd_bck = z.p.clone();
    let mut p_sharp_fwd_bck = p_sharp.clone();
    let mut p_bck_fwd = z.p.clone();
    let mut p_sharp_bck_fwd = p_sharp.clone();
    let mut p_bck_bck = z.p.clone();
    let mut p_sharp_bck_bck = p_sharp;

    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;
    let mut depth = 0;

    let mut integ = Integrator {
        target,
        inv_metric,
        eps,
        rng,
        h0,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };

    loop {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let valid = if integ.rng.random::<bool>() {
            rho_bck.clone_from(&rho);
            p_bck_fwd.clone_from(&p_fwd_bck);
            p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
            integ.build_tree(
                depth,
                &mut z_fwd,
                &mut z_propose,
                &mut p_sharp_fwd_bck,
                &mut p_sharp_fwd_fwd,
                &mut rho_fwd,
                &mut p_fwd_bck,
                &mut p_fwd_fwd,
                1.0,
                &mut lsw_subtree,
            )
        } else {
            rho_fwd.clone_from(&rho);
            p_fwd_bck.clone_from(&p_bck_fwd);
            p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
            integ.build_tree(
                depth,
                &mut z_bck,
                &mut z_propose,
                &mut p_sharp_bck_fwd,
                &mut p_sharp_bck_bck,
                &mut rho_bck,
                &mut p_bck_fwd,
                &mut p_bck_bck,
                -1.0,
                &mut lsw_subtree,
            )
        };
        if !valid {
            break;
        }
        depth += 1;

        if lsw_subtree > log_sum_weight {
            z_sample.clone_from(&z_propose);
        } else {
            let accept = (lsw_subtree - log_sum_weight).exp();
            if integ.rng.random::<f64>() < accept {
                z_sample.clone_from(&z_propose);
            }
        }
        log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

        rho = add(&rho_bck, &rho_fwd);
        let mut persist = no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
        let rho_ext = add(&rho_bck, &p_fwd_bck);
        persist &= no_u_turn(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
        let rho_ext = add(&rho_fwd, &p_bck_fwd);
        persist &= no_u_turn(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
        if !persist || depth > max_depth {
            break;
        }
    }

    let stats = TransitionStats {
        accept_stat: integ.sum_metro_prob / integ.n_leapfrog as f64,
        n_leapfrog: integ.n_leapfrog,
        tree_depth: depth,
        divergent: integ.divergent,
        energy: z_sample.hamiltonian(inv_metric),
    };
    *z = z_sample;
    stats
}

fn init_point<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Point {
    let dim = q.len();
    let mut grad = vec![0.0; dim];
    let logp = target.log_density_grad(&q, &mut grad);
    Point {
        q,
        p: vec![0.0; dim],
        grad,
        logp,
    }
}

/// Doubles or halves the step size until a single leapfrog step's
/// acceptance probability crosses 0.8.
fn find_reasonable_step<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    inv_metric: &[f64],
    z: &Point,
    mut eps: f64,
    rng: &mut R,
) -> Result<f64> {
    let dim = z.q.len();
    let ln_target = 0.8f64.ln();
    let trial = |eps: f64, rng: &mut R| {
        let mut w = z.clone();
        for i in 0..dim {
            let n: f64 = rng.sample(StandardNormal);
            w.p[i] = n / inv_metric[i].sqrt();
        }
        let h0 = w.hamiltonian(inv_metric);
        w.logp = leapfrog(target, inv_metric, eps, &mut w.q, &mut w.p, &mut w.grad);
        h0 - w.hamiltonian(inv_metric)
    };
    let direction = if trial(eps, rng) > ln_target { 1.0 } else { -1.0 };
    for _ in 0..200 {
        let delta = trial(eps, rng);
        if (direction > 0.0 && !(delta > ln_target)) || (direction < 0.0 && !(delta < ln_target)) {
            return Ok(eps);
        }
        eps = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
        if eps > 1e7 {
            return Err(Error::Sampler("step size diverged to infinity; posterior may be improper".into()));
        }
        if eps == 0.0 {
            return Err(Error::Sampler("step size collapsed to zero".into()));
        }
    }
    Ok(eps)
}

/// Runs one chain from `q0` with its own generator.
pub fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    q0: Vec<f64>,
    cfg: &McmcConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut z = init_point(target, q0);
    if !z.logp.is_finite() {
        return Err(Error::Sampler("log density is not finite at the initial point".into()));
    }
    let mut inv_metric = vec![1.0; dim];
    let mut eps = find_reasonable_step(target, &inv_metric, &z, 1.0, rng)?;
    let mut step_adapt = DualAverage::new(cfg.target_accept, eps);
    let mut metric_adapt = WindowedMetric::new(dim, cfg.warmup_draws);
    let mut warmup_divergences = 0;

    for _ in 0..cfg.warmup_draws {
        let stats = transition(target, &inv_metric, eps, cfg.max_tree_depth, &mut z, rng);
        warmup_divergences += stats.divergent as usize;
        eps = step_adapt.update(stats.accept_stat);
        if metric_adapt.learn(&mut inv_metric, &z.q) {
            eps = find_reasonable_step(target, &inv_metric, &z, eps, rng)?;
            step_adapt.restart(eps);
        }
    }
    if cfg.warmup_draws > 0 {
        if warmup_divergences == cfg.warmup_draws {
            return Err(Error::Sampler(format!(
                "every one of {} warmup transitions diverged (last step size {eps:.3e})",
                cfg.warmup_draws
            )));
        }
        eps = step_adapt.final_step();
    }

    let mut draws = Vec::with_capacity(cfg.kept_draws);
    let mut stats = Vec::with_capacity(cfg.kept_draws);
    let mut divergences = 0;
    for _ in 0..cfg.kept_draws {
        let s = transition(target, &inv_metric, eps, cfg.max_tree_depth, &mut z, rng);
        divergences += s.divergent as usize;
        draws.push(z.q.clone());
        stats.push(s);
    }
    Ok(ChainOutput {
        draws,
        stats,
        step_size: eps,
        inv_metric,
        warmup_divergences,
        divergences,
    })
}

/// Generator for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

/// Runs `cfg.chains` independent chains in parallel.
///
/// With `init = None` each chain starts from a uniform draw in
/// `[-init_radius, init_radius]^n` (up to 100 attempts to find a finite
/// density); otherwise every chain starts at `init`.
pub fn nuts_sample<T: LogDensity + ?Sized>(
    target: &T,
    init: Option<&[f64]>,
    cfg: &McmcConfig,
) -> Result<Vec<ChainOutput>> {
    cfg.validate()?;
    let dim = target.dim();
    if let Some(q) = init {
        if q.len() != dim {
            return Err(Error::Structural(format!("initial point has {} coordinates, target has {dim}", q.len())));
        }
    }
    (0..cfg.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(cfg.seed, c);
            let q0 = match init {
                Some(q) => q.to_vec(),
                None => random_init(target, cfg.init_radius, &mut rng)?,
            };
            run_chain(target, q0, cfg, &mut rng)
        })
        .collect()
}

fn random_init<T: LogDensity + ?Sized>(target: &T, radius: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let dim = target.dim();
    let mut grad = vec![0.0; dim];
    for _ in 0..100 {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
        let lp = target.log_density_grad(&q, &mut grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(q);
        }
    }
    Err(Error::Sampler("no finite initial point found in 100 attempts".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(dim: usize) -> impl LogDensity {
        (dim, |x: &[f64], g: &mut [f64]| {
            let mut lp = 0.0;
            for i in 0..x.len() {
                lp -= 0.5 * x[i] * x[i];
                g[i] = -x[i];
            }
            lp
        })
    }

    #[test]
    fn leapfrog_is_reversible() {
        let target = (3usize, |x: &[f64], g: &mut [f64]| {
            // banana-ish smooth density
            g[0] = -x[0] - 0.2 * x[0] * x[1];
            g[1] = -x[1] - 0.1 * x[0] * x[0];
            g[2] = -2.0 * x[2];
            -0.5 * x[0] * x[0] - 0.5 * x[1] * x[1] - 0.1 * x[0] * x[0] * x[1] - x[2] * x[2]
        });
        let inv_metric = [1.0, 0.5, 2.0];
        let q0 = vec![0.3, -0.7, 1.1];
        let p0 = vec![0.9, 0.2, -0.4];
        let mut q = q0.clone();
        let mut p = p0.clone();
        let mut g = vec![0.0; 3];
        target.log_density_grad(&q, &mut g);
        for _ in 0..25 {
            leapfrog(&target, &inv_metric, 0.05, &mut q, &mut p, &mut g);
        }
        for _ in 0..25 {
            leapfrog(&target, &inv_metric, -0.05, &mut q, &mut p, &mut g);
        }
        for i in 0..3 {
            assert!((q[i] - q0[i]).abs() < 1e-10);
            assert!((p[i] - p0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn depth_zero_takes_one_leapfrog() {
        let target = std_normal(4);
        let cfg = McmcConfig {
            chains: 1,
            warmup_draws: 30,
            kept_draws: 50,
            max_tree_depth: 0,
            ..Default::default()
        };
        let out = nuts_sample(&target, None, &cfg).unwrap();
        assert!(out[0].stats.iter().all(|s| s.n_leapfrog == 1));
        assert!(out[0].stats.iter().all(|s| s.tree_depth <= 1));
    }

    #[test]
    fn depth_cap_bounds_trajectory_length() {
        let target = std_normal(20);
        let cfg = McmcConfig {
            chains: 1,
            warmup_draws: 0,
            kept_draws: 50,
            max_tree_depth: 2,
            ..Default::default()
        };
        let out = nuts_sample(&target, Some(&[0.5; 20]), &cfg).unwrap();
        assert!(out[0].stats.iter().all(|s| s.n_leapfrog <= 7));
    }

    #[test]
    fn identical_seed_gives_identical_draws() {
        let target = std_normal(5);
        let cfg = McmcConfig {
            chains: 3,
            warmup_draws: 100,
            kept_draws: 100,
            seed: 42,
            ..Default::default()
        };
        let a = nuts_sample(&target, None, &cfg).unwrap();
        let b = nuts_sample(&target, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].draws, a[1].draws);
    }

    #[test]
    fn non_finite_init_is_an_error() {
        let target = (1usize, |_: &[f64], g: &mut [f64]| {
            g[0] = 0.0;
            f64::NEG_INFINITY
        });
        let cfg = McmcConfig {
            chains: 1,
            ..Default::default()
        };
        assert!(matches!(nuts_sample(&target, Some(&[0.0]), &cfg), Err(Error::Sampler(_))));
        assert!(matches!(nuts_sample(&target, None, &cfg), Err(Error::Sampler(_))));
    }

    #[test]
    fn bad_config_is_rejected() {
        let target = std_normal(1);
        let cfg = McmcConfig {
            target_accept: 1.0,
            ..Default::default()
        };
        assert!(nuts_sample(&target, None, &cfg).is_err());
    }
}
