//! Ancestral sampling from the network, raw-feature lifting for the
//! feature pipeline, and simulation-based calibration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dag::SymptomDag;
use crate::density::{condition_eta, measure_mean, symptom_eta};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, COMPONENTS};
use crate::params::{logistic, ModelParams};
use crate::types::{
    AgeGroup, CompleteCase, Condition, Device, Gender, ModelShape, ParticipantRecord, SymptomVector, PHQ8_CUTOFF,
    PHQ8_ITEMS,
};

/// Seed of the fixed measure-to-feature maps, shared by every dataset so
/// that separately simulated files live in the same feature space.
const LIFT_SEED: u64 = 0x6d64_6462_6179_6573;

/// Parameters used to simulate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: ModelParams,
    pub seed: u64,
    pub n: usize,
}

/// Effect sizes of a demo parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    /// Typical `ω_{s,c}`.
    pub symptom_condition: f64,
    /// Magnitude of every `ω_{m,c}` (random sign).
    pub measure_condition: f64,
    /// Half-width of the uniform range of `ω_{m,s}`.
    pub measure_symptom: f64,
    /// Multiplier on every age, gender and device effect.
    pub confound: f64,
    /// Typical `σ_m`.
    pub sigma: f64,
}

impl Default for EffectSizes {
    fn default() -> Self {
        EffectSizes {
            symptom_condition: 0.8,
            measure_condition: 1.0,
            measure_symptom: 0.3,
            confound: 1.0,
            sigma: 4.0,
        }
    }
}

impl EffectSizes {
    /// No condition signal anywhere and no confound effects.
    pub fn null() -> Self {
        EffectSizes {
            symptom_condition: 0.0,
            measure_condition: 0.0,
            measure_symptom: 0.0,
            confound: 0.0,
            ..Self::default()
        }
    }
}

/// A small symptom graph used by the demo parameters:
/// sleep -> tiredness, mood -> failure, tiredness -> concentration.
pub fn demo_dag() -> SymptomDag {
    let mut adj = vec![vec![false; PHQ8_ITEMS]; PHQ8_ITEMS];
    adj[2][3] = true;
    adj[1][5] = true;
    adj[3][6] = true;
    SymptomDag::from_adjacency(adj).expect("acyclic")
}

/// Demo parameters with the given effect sizes, randomized by `seed`.
pub fn demo_params(shape: ModelShape, dag: SymptomDag, effects: &EffectSizes, seed: u64) -> Result<ModelParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(shape, dag)?;
    let cs = effects.confound;
    p.age_probs = [0.3, 0.3, 0.25, 0.15];
    p.gender_prob = 0.55;
    p.device_prob = 0.5;
    p.cond_w = [-0.9, 0.2 * cs, 0.3 * cs];
    for w in p.symp_w.iter_mut() {
        w[0] = rng.random_range(-1.3..-0.7);
        w[1] = cs * rng.random_range(-0.15..0.15);
        w[2] = cs * rng.random_range(-0.3..0.3);
        w[3] = effects.symptom_condition * rng.random_range(0.8..1.2);
        for pw in w[4..].iter_mut() {
            *pw = rng.random_range(0.4..0.8);
        }
    }
    for w in p.meas_w.iter_mut() {
        w[0] = rng.random_range(-1.0..1.0);
        w[1] = cs * rng.random_range(-0.2..0.2);
        w[2] = cs * rng.random_range(-0.4..0.4);
        w[3] = cs * rng.random_range(-0.4..0.4);
        w[4] = if rng.random::<bool>() { 1.0 } else { -1.0 } * effects.measure_condition;
        for sw in w[5..].iter_mut() {
            *sw = if effects.measure_symptom > 0.0 {
                rng.random_range(-effects.measure_symptom..effects.measure_symptom)
            } else {
                0.0
            };
        }
    }
    for s in p.meas_sigma.iter_mut() {
        *s = effects.sigma * rng.random_range(0.9..1.1);
    }
    p.validate()?;
    Ok(p)
}

/// Draws a parameter set from the prior.
pub fn sample_prior(shape: ModelShape, dag: SymptomDag, rng: &mut ChaCha8Rng) -> Result<ModelParams> {
    let mut p = ModelParams::zeros(shape, dag)?;
    let e: [f64; 4] = std::array::from_fn(|_| Exp1.sample(rng));
    let total: f64 = e.iter().sum();
    p.age_probs = e.map(|v| (v / total).max(f64::MIN_POSITIVE));
    p.gender_prob = rng.random_range(f64::EPSILON..1.0);
    p.device_prob = rng.random_range(f64::EPSILON..1.0);
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    p.cond_w.iter_mut().for_each(|w| *w = normal());
    p.symp_w.iter_mut().flatten().for_each(|w| *w = normal());
    p.meas_w.iter_mut().flatten().for_each(|w| *w = normal());
    p.meas_sigma.iter_mut().for_each(|s| *s = normal().exp());
    Ok(p)
}

fn categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Draws one case by ancestral sampling in the graph's topological order.
pub fn sample_case(p: &ModelParams, rng: &mut ChaCha8Rng) -> CompleteCase {
    let shape = p.shape();
    let age = AgeGroup::new(categorical(&p.age_probs, rng) as u8).expect("four categories");
    let gender = Gender::from_bit(rng.random::<f64>() < p.gender_prob);
    let device = Device::from_bit(rng.random::<f64>() < p.device_prob);
    let condition = Condition::from_bit(rng.random::<f64>() < logistic(condition_eta(p, age, gender)));
    let mut s = vec![0u8; shape.n_symptoms];
    for &k in p.dag.order() {
        let parents: Vec<u8> = p.dag.parents(k).iter().map(|&j| s[j]).collect();
        let eta = symptom_eta(p, k, age, gender, condition, &parents).expect("shape checked");
        s[k] = (rng.random::<f64>() < logistic(eta)) as u8;
    }
    let symptoms = SymptomVector::new(s).expect("binary");
    let measures = (0..shape.n_measures)
        .map(|m| {
            let mean = measure_mean(p, m, age, gender, device, condition, &symptoms).expect("shape checked");
            let z: f64 = StandardNormal.sample(rng);
            mean + p.meas_sigma[m] * z
        })
        .collect();
    CompleteCase {
        age,
        gender,
        device,
        condition,
        symptoms,
        measures,
    }
}

/// `gt.n` independent cases.
pub fn sample_cases(gt: &GroundTruth) -> Vec<CompleteCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(gt.seed);
    (0..gt.n).map(|_| sample_case(&gt.params, &mut rng)).collect()
}

/// How measures are turned into raw per-set feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFeatureSpec {
    pub layout: FeatureLayout,
    /// Raw width of each feature set.
    pub dims: Vec<usize>,
    pub noise_sd: f64,
    /// Probability that an activity is missing for a participant.
    pub missing_prob: f64,
}

impl Default for RawFeatureSpec {
    fn default() -> Self {
        RawFeatureSpec {
            layout: FeatureLayout::default(),
            dims: vec![6, 12, 10, 8, 6, 6, 10, 8],
            noise_sd: 1.0,
            missing_prob: 0.0,
        }
    }
}

impl RawFeatureSpec {
    /// Fixed `dims[j] × 2` maps from a set's measures to its raw features.
    pub fn lift_maps(&self) -> Vec<Vec<[f64; COMPONENTS]>> {
        let mut rng = ChaCha8Rng::seed_from_u64(LIFT_SEED);
        self.dims
            .iter()
            .map(|&d| {
                (0..d)
                    .map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut rng)))
                    .collect()
            })
            .collect()
    }
}

/// Simulated cases together with their raw-record form.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub cases: Vec<CompleteCase>,
    pub records: Vec<ParticipantRecord>,
    /// Records whose item scores had to leave their symptom's band to
    /// agree with the condition.
    pub band_violations: usize,
}

/// Item scores in the band of each symptom (low: 0-1, high: 2-3), adjusted
/// so that the total is at least the cutoff exactly when the condition is
/// present. Returns whether a band had to be left.
pub fn items_for(symptoms: &SymptomVector, condition: Condition, rng: &mut ChaCha8Rng) -> ([u8; PHQ8_ITEMS], bool) {
    let mut items = [0u8; PHQ8_ITEMS];
    let (lo, hi): (Vec<u8>, Vec<u8>) = symptoms.values().iter().map(|&v| if v == 1 { (2, 3) } else { (0, 1) }).unzip();
    for s in 0..PHQ8_ITEMS {
        items[s] = lo[s] + rng.random_range(0..=1);
    }
    let cutoff = PHQ8_CUTOFF as u32;
    let total = |it: &[u8; PHQ8_ITEMS]| it.iter().map(|&v| v as u32).sum::<u32>();
    let mut violated = false;
    let want = condition == Condition::Present;
    while (total(&items) >= cutoff) != want {
        let movable: Vec<usize> = (0..PHQ8_ITEMS)
            .filter(|&s| if want { items[s] < hi[s] } else { items[s] > lo[s] })
            .collect();
        let candidates = if movable.is_empty() {
            violated = true;
            (0..PHQ8_ITEMS)
                .filter(|&s| if want { items[s] < 3 } else { items[s] > 0 })
                .collect()
        } else {
            movable
        };
        let s = candidates[rng.random_range(0..candidates.len())];
        if want {
            items[s] += 1;
        } else {
            items[s] -= 1;
        }
    }
    (items, violated)
}

/// Samples cases and raw records: PHQ-8 items consistent with the sampled
/// symptoms and condition, feature vectors lifted from the measures, and a
/// country label with no effect.
pub fn sample_dataset(gt: &GroundTruth, raw: &RawFeatureSpec) -> Result<SyntheticDataset> {
    let shape = gt.params.shape();
    raw.layout.validate()?;
    if shape.n_symptoms != PHQ8_ITEMS || shape.n_measures != raw.layout.n_measures() {
        return Err(Error::Structural(format!(
            "raw records need {PHQ8_ITEMS} symptoms and {} measures",
            raw.layout.n_measures()
        )));
    }
    if raw.dims.len() != raw.layout.sets.len() || raw.dims.iter().any(|&d| d < COMPONENTS) {
        return Err(Error::Structural("one raw width of at least 2 per feature set".into()));
    }
    let cases = sample_cases(gt);
    let maps = raw.lift_maps();
    let mut rng = ChaCha8Rng::seed_from_u64(gt.seed);
    rng.set_stream(1);
    let activities = raw.layout.activities();
    let mut band_violations = 0;
    let records = cases
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let (items, violated) = items_for(&case.symptoms, case.condition, &mut rng);
            band_violations += violated as usize;
            let missing: Vec<&str> = activities
                .iter()
                .copied()
                .filter(|_| rng.random::<f64>() < raw.missing_prob)
                .collect();
            let mut features = BTreeMap::new();
            for (j, name) in raw.layout.sets.iter().enumerate() {
                let m = raw.layout.measures_of_set(j);
                let (a, b) = (case.measures[m.start], case.measures[m.start + 1]);
                let v: Vec<f64> = maps[j]
                    .iter()
                    .map(|row| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        row[0] * a + row[1] * b + raw.noise_sd * z
                    })
                    .collect();
                if !missing.contains(&crate::features::activity_of(name)) {
                    features.insert(name.clone(), v);
                }
            }
            let country = if rng.random::<bool>() { "UK" } else { "US" };
            ParticipantRecord {
                id: format!("p{i:05}"),
                age: case.age,
                gender: case.gender,
                device: case.device,
                phq8: Some(items),
                condition: Some(case.condition),
                features,
                metadata: BTreeMap::from([("country".to_string(), country.to_string())]),
            }
        })
        .collect();
    Ok(SyntheticDataset {
        cases,
        records,
        band_violations,
    })
}

/// Rank statistics of a simulation-based calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcResult {
    pub trials: usize,
    pub skipped: usize,
    /// Posterior draws per trial; ranks lie in `0..=n_draws`.
    pub n_draws: usize,
    pub bins: usize,
    /// `ranks[k][t]`: rank of parameter `k` in successful trial `t`.
    pub ranks: Vec<Vec<usize>>,
    pub histograms: Vec<Vec<usize>>,
    pub chi_square: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl SbcResult {
    /// Fraction of parameters whose uniformity test is not rejected at `alpha`.
    pub fn fraction_uniform(&self, alpha: f64) -> f64 {
        self.p_values.iter().filter(|&&p| p > alpha).count() as f64 / self.p_values.len().max(1) as f64
    }
}

/// Per trial: `prior` draws a truth and its flat parameter values,
/// `simulate` draws data, `fit` returns posterior draws (one flat vector per
/// draw). Ranks count draws strictly below the truth. `n_draws + 1` must be
/// a multiple of `bins`. Failed fits are skipped and counted.
pub fn sbc_run<T, D, P, S, F>(
    trials: usize,
    bins: usize,
    seed: u64,
    prior: P,
    simulate: S,
    fit: F,
) -> Result<SbcResult>
where
    T: Send,
    P: Fn(&mut ChaCha8Rng) -> (T, Vec<f64>) + Sync,
    S: Fn(&T, &mut ChaCha8Rng) -> D + Sync,
    F: Fn(&D, u64) -> Result<Vec<Vec<f64>>> + Sync,
{
    if trials < 50 {
        return Err(Error::InsufficientData(format!("{trials} calibration trials, need at least 50")));
    }
    if bins < 2 {
        return Err(Error::value("bins", "need at least 2"));
    }
    let outcomes: Vec<Option<(Vec<f64>, Vec<Vec<f64>>)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let (truth, values) = prior(&mut rng);
            let data = simulate(&truth, &mut rng);
            fit(&data, seed.wrapping_add(t as u64 + 1)).ok().map(|d| (values, d))
        })
        .collect();
    let ok: Vec<(Vec<f64>, Vec<Vec<f64>>)> = outcomes.into_iter().flatten().collect();
    let skipped = trials - ok.len();
    let (first_truth, first_draws) = ok
        .first()
        .ok_or_else(|| Error::Sampler("every calibration trial failed".into()))?;
    let n_params = first_truth.len();
    let n_draws = first_draws.len();
    if (n_draws + 1) % bins != 0 {
        return Err(Error::value("bins", format!("{} rank values do not split into {bins} bins", n_draws + 1)));
    }
    if ok.iter().any(|(v, d)| v.len() != n_params || d.len() != n_draws || d.iter().any(|x| x.len() != n_params)) {
        return Err(Error::Structural("trials returned inconsistent shapes".into()));
    }
    let ranks: Vec<Vec<usize>> = (0..n_params)
        .map(|k| ok.iter().map(|(v, d)| d.iter().filter(|x| x[k] < v[k]).count()).collect())
        .collect();
    let expected = ok.len() as f64 / bins as f64;
    let chi = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut histograms = Vec::with_capacity(n_params);
    let mut chi_square = Vec::with_capacity(n_params);
    let mut p_values = Vec::with_capacity(n_params);
    for r in &ranks {
        let mut h = vec![0usize; bins];
        for &x in r {
            h[x * bins / (n_draws + 1)] += 1;
        }
        let stat: f64 = h.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        p_values.push(chi.sf(stat));
        chi_square.push(stat);
        histograms.push(h);
    }
    Ok(SbcResult {
        trials,
        skipped,
        n_draws,
        bins,
        ranks,
        histograms,
        chi_square,
        p_values,
    })
}
