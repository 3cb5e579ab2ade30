//! Stratified cross-validation, scenario scoring and subgroup slicing.

mod metrics;
mod scenarios;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dag::SymptomDag;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FittedPipeline, PipelineConfig};
use crate::inference::{fit, Evidence, Predictor, Target};
use crate::lingam::{discover_symptom_dag, LingamConfig};
use crate::nuts::McmcConfig;
use crate::types::{AgeGroup, Condition, Gender, ParticipantRecord};

pub use metrics::{kfold_by_key, mean_sd, roc_auc, stratified_kfold, stratum, StratumKey};
pub use scenarios::{default_scenarios, single_activity_names, ScenarioSpec, ALL_ACTIVITIES, CONFOUNDS_ONLY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub mcmc: McmcConfig,
    pub lingam: LingamConfig,
    pub pipeline: PipelineConfig,
    pub layout: FeatureLayout,
    /// Posterior draws used to score test participants (evenly thinned).
    pub score_draws: usize,
    /// Use this graph in every fold instead of rediscovering it.
    pub fixed_dag: Option<SymptomDag>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            seed: 0,
            mcmc: McmcConfig::default(),
            lingam: LingamConfig::default(),
            pipeline: PipelineConfig::default(),
            layout: FeatureLayout::default(),
            score_draws: 200,
            fixed_dag: None,
        }
    }
}

/// Posterior-mean scores of one test participant under one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScores {
    pub condition: f64,
    /// `None` where the symptom is evidence in the scenario.
    pub symptoms: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantScores {
    pub index: usize,
    pub fold: usize,
    pub age: AgeGroup,
    pub gender: Gender,
    pub metadata: BTreeMap<String, String>,
    pub condition: bool,
    /// Binarized with the thresholds of the participant's training fold.
    pub symptoms: Vec<u8>,
    /// Aligned with the scenario list.
    pub scores: Vec<ScenarioScores>,
}

/// Per-fold values with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_fold: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl MetricSummary {
    pub fn new(per_fold: Vec<Option<f64>>) -> Self {
        let (mean, sd) = mean_sd(&per_fold);
        MetricSummary { per_fold, mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub condition: MetricSummary,
    /// Per symptom; `None` for symptoms observed in the scenario.
    pub symptoms: Vec<Option<MetricSummary>>,
    /// Per fold, the unweighted mean of the defined symptom AUCs.
    pub symptom_mean: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub slice: String,
    pub n: usize,
    pub n_positive: usize,
    pub condition_auc: Option<f64>,
    pub symptom_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: usize,
    pub seed: u64,
    pub n_scored: usize,
    pub scenarios: Vec<ScenarioResult>,
    /// Scenario the subgroup rows are computed for.
    pub subgroup_scenario: String,
    /// Computed on test predictions pooled over folds.
    pub subgroups: Vec<SubgroupRow>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub report: EvalReport,
    pub predictions: Vec<ParticipantScores>,
    pub fold_dags: Vec<SymptomDag>,
}

/// Every observed variable of a record, measures through the fitted pipeline.
pub fn full_evidence(rec: &ParticipantRecord, pipe: &FittedPipeline) -> Result<Evidence> {
    let mut ev = Evidence::with_confounds(rec.age, rec.gender, rec.device);
    ev.measures = pipe.measures(&rec.features)?;
    if let Some(items) = &rec.phq8 {
        let s = pipe.symptoms(items)?;
        ev.symptoms = s.values().iter().enumerate().map(|(i, &v)| (i, v)).collect();
    }
    Ok(ev)
}

fn fold_auc(preds: &[&ParticipantScores], score: impl Fn(&ParticipantScores) -> Option<(f64, bool)>) -> Option<f64> {
    let (s, l): (Vec<f64>, Vec<bool>) = preds.iter().filter_map(|p| score(p)).unzip();
    roc_auc(&s, &l).ok()
}

fn condition_auc(preds: &[&ParticipantScores], k: usize) -> Option<f64> {
    fold_auc(preds, |p| Some((p.scores[k].condition, p.condition)))
}

fn symptom_aucs(preds: &[&ParticipantScores], k: usize, n_symptoms: usize) -> Vec<Option<f64>> {
    (0..n_symptoms)
        .map(|s| fold_auc(preds, |p| p.scores[k].symptoms[s].map(|v| (v, p.symptoms[s] == 1))))
        .collect()
}

fn mean_defined(v: &[Option<f64>]) -> Option<f64> {
    mean_sd(v).0
}

/// Scores one fold: fits the pipeline, graph and posterior on `train`, then
/// scores every labelled `test` record under each scenario.
fn run_fold(
    records: &[ParticipantRecord],
    train: &[usize],
    test: &[usize],
    fold: usize,
    scenarios: &[ScenarioSpec],
    cfg: &CvConfig,
) -> Result<(Vec<ParticipantScores>, SymptomDag)> {
    let train_recs: Vec<ParticipantRecord> = train.iter().map(|&i| records[i].clone()).collect();
    let pipe = FittedPipeline::fit(&train_recs, &cfg.layout, &cfg.pipeline)?;
    let shape = pipe.shape()?;
    let dag = match &cfg.fixed_dag {
        Some(d) => d.clone(),
        None => {
            let lc = LingamConfig {
                seed: cfg.lingam.seed.wrapping_add(fold as u64),
                ..cfg.lingam.clone()
            };
            discover_symptom_dag(&train_recs, &lc)?.dag
        }
    };
    let cases: Vec<_> = train_recs
        .iter()
        .map(|r| pipe.complete_case(r))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mcmc = McmcConfig {
        seed: cfg.seed.wrapping_mul(1_000_003).wrapping_add(fold as u64),
        ..cfg.mcmc.clone()
    };
    let draws = fit(&cases, &dag, &mcmc)?;
    let predictor = Predictor::new(&draws.thinned(cfg.score_draws))?;

    let mut out = Vec::new();
    for &i in test {
        let rec = &records[i];
        let (Some(items), Some(cond)) = (rec.phq8.as_ref(), rec.condition()) else {
            continue;
        };
        let full = full_evidence(rec, &pipe)?;
        let mut scores = Vec::with_capacity(scenarios.len());
        for sc in scenarios {
            let ev = sc.evidence(&full, &cfg.layout);
            let targets = sc.targets(&shape);
            let probs = predictor.mean_positive(&ev, &targets)?;
            let mut symptoms = vec![None; shape.n_symptoms];
            for (t, p) in targets.iter().zip(&probs).skip(1) {
                if let Target::Symptom(s) = t {
                    symptoms[*s] = Some(*p);
                }
            }
            scores.push(ScenarioScores {
                condition: probs[0],
                symptoms,
            });
        }
        out.push(ParticipantScores {
            index: i,
            fold,
            age: rec.age,
            gender: rec.gender,
            metadata: rec.metadata.clone(),
            condition: cond == Condition::Present,
            symptoms: pipe.symptoms(items)?.values().to_vec(),
            scores,
        });
    }
    Ok((out, dag))
}

/// Stratified k-fold evaluation over the given scenarios.
///
/// Headline rows average per-fold AUCs; subgroup rows use pooled test
/// predictions of the [`ALL_ACTIVITIES`] scenario (or the last scenario
/// when it is absent).
pub fn run_cv(records: &[ParticipantRecord], scenarios: &[ScenarioSpec], cfg: &CvConfig) -> Result<CvResult> {
    if scenarios.is_empty() {
        return Err(Error::value("scenarios", "none given"));
    }
    for r in records {
        r.validate()?;
    }
    let folds = stratified_kfold(records, cfg.folds, cfg.seed)?;
    let mut predictions = Vec::new();
    let mut fold_dags = Vec::new();
    for (f, test) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let (p, dag) = run_fold(records, &train, test, f, scenarios, cfg)?;
        predictions.extend(p);
        fold_dags.push(dag);
    }
    predictions.sort_by_key(|p| p.index);
    let n_symptoms = predictions.first().map_or(0, |p| p.symptoms.len());

    let mut notes = vec!["headline rows: mean and sample SD of per-fold AUCs".to_string()];
    let by_fold: Vec<Vec<&ParticipantScores>> = (0..cfg.folds)
        .map(|f| predictions.iter().filter(|p| p.fold == f).collect())
        .collect();
    let results = scenarios
        .iter()
        .enumerate()
        .map(|(k, sc)| {
            let cond: Vec<Option<f64>> = by_fold.iter().map(|fp| condition_auc(fp, k)).collect();
            let undefined = cond.iter().filter(|c| c.is_none()).count();
            if undefined > 0 {
                notes.push(format!("{}: condition AUC undefined in {undefined} fold(s), excluded", sc.name));
            }
            let per_sym: Vec<Vec<Option<f64>>> = by_fold.iter().map(|fp| symptom_aucs(fp, k, n_symptoms)).collect();
            let symptoms = (0..n_symptoms)
                .map(|s| {
                    (!sc.symptoms.contains(&s)).then(|| MetricSummary::new(per_sym.iter().map(|f| f[s]).collect()))
                })
                .collect();
            ScenarioResult {
                name: sc.name.clone(),
                condition: MetricSummary::new(cond),
                symptoms,
                symptom_mean: MetricSummary::new(per_sym.iter().map(|f| mean_defined(f)).collect()),
            }
        })
        .collect();

    let k = scenarios
        .iter()
        .position(|s| s.name == ALL_ACTIVITIES)
        .unwrap_or(scenarios.len() - 1);
    notes.push(format!("subgroup rows: pooled test predictions, scenario {}", scenarios[k].name));
    let subgroups = subgroup_report(&predictions, k, &default_slices(&predictions));
    Ok(CvResult {
        report: EvalReport {
            folds: cfg.folds,
            seed: cfg.seed,
            n_scored: predictions.len(),
            scenarios: results,
            subgroup_scenario: scenarios[k].name.clone(),
            subgroups,
            notes,
        },
        predictions,
        fold_dags,
    })
}

/// A subset of participants for the subgroup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slice {
    All,
    Gender(Gender),
    AgeBelow36,
    AgeFrom36,
    Metadata { key: String, value: String },
}

impl Slice {
    pub fn name(&self) -> String {
        match self {
            Slice::All => "all".into(),
            Slice::Gender(Gender::Male) => "gender=male".into(),
            Slice::Gender(Gender::Female) => "gender=female".into(),
            Slice::AgeBelow36 => "age<36".into(),
            Slice::AgeFrom36 => "age>=36".into(),
            Slice::Metadata { key, value } => format!("{key}={value}"),
        }
    }

    pub fn contains(&self, p: &ParticipantScores) -> bool {
        match self {
            Slice::All => true,
            Slice::Gender(g) => p.gender == *g,
            Slice::AgeBelow36 => p.age.lower_age() < 36,
            Slice::AgeFrom36 => p.age.lower_age() >= 36,
            Slice::Metadata { key, value } => p.metadata.get(key) == Some(value),
        }
    }
}

/// All, each gender, age below/above 36, and each observed country.
pub fn default_slices(preds: &[ParticipantScores]) -> Vec<Slice> {
    let mut v = vec![
        Slice::All,
        Slice::Gender(Gender::Male),
        Slice::Gender(Gender::Female),
        Slice::AgeBelow36,
        Slice::AgeFrom36,
    ];
    let countries: std::collections::BTreeSet<&String> = preds.iter().filter_map(|p| p.metadata.get("country")).collect();
    v.extend(countries.into_iter().map(|c| Slice::Metadata {
        key: "country".into(),
        value: c.clone(),
    }));
    v
}

/// AUCs over pooled predictions of scenario `k` restricted to each slice.
pub fn subgroup_report(preds: &[ParticipantScores], k: usize, slices: &[Slice]) -> Vec<SubgroupRow> {
    slices
        .iter()
        .map(|sl| {
            let sub: Vec<&ParticipantScores> = preds.iter().filter(|p| sl.contains(p)).collect();
            let n_sym = sub.first().map_or(0, |p| p.symptoms.len());
            SubgroupRow {
                slice: sl.name(),
                n: sub.len(),
                n_positive: sub.iter().filter(|p| p.condition).count(),
                condition_auc: condition_auc(&sub, k),
                symptom_auc: mean_defined(&symptom_aucs(&sub, k, n_sym)),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.3}"))
}

fn fmt_summary(m: &MetricSummary) -> String {
    match (m.mean, m.sd) {
        (Some(a), Some(s)) => format!("{a:.3} ± {s:.3}"),
        (Some(a), None) => format!("{a:.3}"),
        _ => "n/a".into(),
    }
}

impl EvalReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// Plain-text tables: scenario grid, then subgroup rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>16} {:>16}", "Scenario", "Condition AUC", "Symptoms AUC");
        for s in &self.scenarios {
            let _ = writeln!(
                out,
                "{:<28} {:>16} {:>16}",
                s.name,
                fmt_summary(&s.condition),
                fmt_summary(&s.symptom_mean)
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Subgroups ({})", self.subgroup_scenario);
        let _ = writeln!(out, "{:<20} {:>6} {:>16} {:>16}", "Slice", "n", "Condition AUC", "Symptoms AUC");
        if let Some(h) = self.scenario(&self.subgroup_scenario) {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>16} {:>16}",
                "all (fold mean)",
                self.n_scored,
                fmt_summary(&h.condition),
                fmt_summary(&h.symptom_mean)
            );
        }
        for r in &self.subgroups {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>16} {:>16}",
                r.slice,
                r.n,
                fmt_opt(r.condition_auc),
                fmt_opt(r.symptom_auc)
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(i: usize, gender: Gender, cond: bool, s: f64) -> ParticipantScores {
        ParticipantScores {
            index: i,
            fold: i % 2,
            age: AgeGroup::new((i % 4) as u8).unwrap(),
            gender,
            metadata: BTreeMap::new(),
            condition: cond,
            symptoms: vec![cond as u8],
            scores: vec![ScenarioScores {
                condition: s,
                symptoms: vec![Some(s)],
            }],
        }
    }

    #[test]
    fn whole_population_slice_equals_pooled_auc() {
        let preds: Vec<_> = (0..40)
            .map(|i| score(i, Gender::from_bit(i % 3 == 0), i % 2 == 0, ((i * 7) % 11) as f64))
            .collect();
        let rows = subgroup_report(&preds, 0, &[Slice::All, Slice::Gender(Gender::Male), Slice::Gender(Gender::Female)]);
        let s: Vec<f64> = preds.iter().map(|p| p.scores[0].condition).collect();
        let l: Vec<bool> = preds.iter().map(|p| p.condition).collect();
        assert_eq!(rows[0].condition_auc, Some(roc_auc(&s, &l).unwrap()));
        assert_eq!(rows[1].n + rows[2].n, rows[0].n);
    }

    #[test]
    fn single_class_slice_is_undefined() {
        let preds: Vec<_> = (0..10).map(|i| score(i, Gender::Male, i % 2 == 0, i as f64)).collect();
        let rows = subgroup_report(&preds, 0, &[Slice::Gender(Gender::Female)]);
        assert_eq!(rows[0].condition_auc, None);
    }
}
