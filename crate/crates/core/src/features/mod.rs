//! Raw features to activity measures, and PHQ-8 items to binary symptoms.
//!
//! Each feature set is standardized and reduced to two supervised principal
//! components; the components of all sets, in layout order, form the
//! measure vector. Every state is fitted on training rows only.

mod binarizer;
mod scaler;
mod spca;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CompleteCase, ModelShape, ParticipantRecord, SymptomVector, PHQ8_ITEMS};

pub use binarizer::{fit_binarizer, fit_logistic_1d, BinarizerState, FALLBACK_THRESHOLD};
pub use scaler::{fit_scaler, ScalerState};
pub use spca::{fit_supervised_pca, SupervisedPcaState, COMPONENTS};

/// Activities in measure order.
pub const ACTIVITIES: [&str; 3] = ["nback", "image", "paragraph"];

/// Ordered feature-set names. A set named `image_video` belongs to the
/// `image` activity and yields measures `2j` and `2j + 1` for position `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub sets: Vec<String>,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        FeatureLayout {
            sets: [
                "nback_cog",
                "image_video",
                "image_egemaps",
                "image_ling",
                "image_extra1",
                "image_extra2",
                "paragraph_egemaps",
                "paragraph_formant",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

pub fn activity_of(set: &str) -> &str {
    set.split('_').next().unwrap_or(set)
}

impl FeatureLayout {
    pub fn new(sets: Vec<String>) -> Result<Self> {
        let layout = FeatureLayout { sets };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sets.is_empty() {
            return Err(Error::Structural("no feature sets".into()));
        }
        let mut last = 0;
        for (j, s) in self.sets.iter().enumerate() {
            let rank = ACTIVITIES
                .iter()
                .position(|a| *a == activity_of(s))
                .ok_or_else(|| Error::value(s.clone(), "feature set must start with nback_, image_ or paragraph_"))?;
            if rank < last {
                return Err(Error::Structural(format!("feature set {s} is out of activity order")));
            }
            last = rank;
            if self.sets[..j].contains(s) {
                return Err(Error::Structural(format!("feature set {s} listed twice")));
            }
        }
        Ok(())
    }

    pub fn n_measures(&self) -> usize {
        COMPONENTS * self.sets.len()
    }

    pub fn shape(&self) -> Result<ModelShape> {
        ModelShape::new(PHQ8_ITEMS, self.n_measures())
    }

    pub fn measures_of_set(&self, j: usize) -> std::ops::Range<usize> {
        COMPONENTS * j..COMPONENTS * (j + 1)
    }

    /// Activities with at least one set, in measure order.
    pub fn activities(&self) -> Vec<&'static str> {
        ACTIVITIES
            .into_iter()
            .filter(|a| self.sets.iter().any(|s| activity_of(s) == *a))
            .collect()
    }

    pub fn measures_of_activity(&self, activity: &str) -> Vec<usize> {
        self.sets
            .iter()
            .enumerate()
            .filter(|(_, s)| activity_of(s) == activity)
            .flat_map(|(j, _)| self.measures_of_set(j))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Supervision strength of the supervised PCA.
    pub mu: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { mu: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetState {
    pub name: String,
    pub scaler: ScalerState,
    pub spca: SupervisedPcaState,
}

/// Fitted feature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub layout: FeatureLayout,
    pub config: PipelineConfig,
    pub sets: Vec<SetState>,
    pub binarizer: BinarizerState,
}

impl FittedPipeline {
    /// Fits scalers, projections and thresholds on labelled `records`.
    pub fn fit(records: &[ParticipantRecord], layout: &FeatureLayout, config: &PipelineConfig) -> Result<Self> {
        layout.validate()?;
        let labelled: Vec<&ParticipantRecord> = records.iter().filter(|r| r.phq8.is_some()).collect();
        let items: Vec<Vec<u8>> = labelled.iter().map(|r| r.phq8.unwrap().to_vec()).collect();
        let cond: Vec<_> = labelled.iter().map(|r| r.condition().expect("phq8 present")).collect();
        if labelled.is_empty() {
            return Err(Error::InsufficientData("no records with PHQ-8 items".into()));
        }
        let binarizer = fit_binarizer(&items, &cond)?;

        let mut sets = Vec::with_capacity(layout.sets.len());
        for name in &layout.sets {
            let rows: Vec<(&Vec<f64>, f64)> = labelled
                .iter()
                .zip(&cond)
                .filter_map(|(r, c)| r.features.get(name).map(|f| (f, c.code() as f64)))
                .collect();
            if rows.len() <= COMPONENTS {
                return Err(Error::InsufficientData(format!("feature set {name} has {} training rows", rows.len())));
            }
            let d = rows[0].0.len();
            if rows.iter().any(|(f, _)| f.len() != d) {
                return Err(Error::Structural(format!("feature set {name} rows differ in width")));
            }
            let x = DMatrix::from_fn(rows.len(), d, |r, c| rows[r].0[c]);
            let y: Vec<f64> = rows.iter().map(|(_, c)| *c).collect();
            let scaler = fit_scaler(&x)?;
            let z = scaler.transform(&x)?;
            let spca = fit_supervised_pca(&z, &y, config.mu)
                .map_err(|e| Error::InsufficientData(format!("feature set {name}: {e}")))?;
            sets.push(SetState {
                name: name.clone(),
                scaler,
                spca,
            });
        }
        Ok(FittedPipeline {
            layout: layout.clone(),
            config: config.clone(),
            sets,
            binarizer,
        })
    }

    pub fn shape(&self) -> Result<ModelShape> {
        self.layout.shape()
    }

    /// Measures of every feature set present in `features`.
    pub fn measures(&self, features: &BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<usize, f64>> {
        if let Some(name) = features.keys().find(|k| !self.layout.sets.contains(k)) {
            return Err(Error::value(name.clone(), "unknown feature set"));
        }
        let mut out = BTreeMap::new();
        for (j, st) in self.sets.iter().enumerate() {
            if let Some(raw) = features.get(&st.name) {
                let z = st.scaler.transform_row(raw).map_err(|e| Error::value(st.name.clone(), e.to_string()))?;
                for (m, v) in self.layout.measures_of_set(j).zip(st.spca.project_row(&z)?) {
                    out.insert(m, v);
                }
            }
        }
        Ok(out)
    }

    pub fn symptoms(&self, items: &[u8]) -> Result<SymptomVector> {
        self.binarizer.binarize(items)
    }

    /// The record as a training case, or `None` if anything is missing.
    pub fn complete_case(&self, rec: &ParticipantRecord) -> Result<Option<CompleteCase>> {
        let (Some(items), Some(condition)) = (rec.phq8.as_ref(), rec.condition()) else {
            return Ok(None);
        };
        if self.layout.sets.iter().any(|s| !rec.features.contains_key(s)) {
            return Ok(None);
        }
        let measures = self.measures(&rec.features)?;
        Ok(Some(CompleteCase {
            age: rec.age,
            gender: rec.gender,
            device: rec.device,
            condition,
            symptoms: self.symptoms(items)?,
            measures: measures.into_values().collect(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_measure_order() {
        let l = FeatureLayout::default();
        l.validate().unwrap();
        assert_eq!(l.n_measures(), 16);
        assert_eq!(l.measures_of_activity("nback"), vec![0, 1]);
        assert_eq!(l.measures_of_activity("image"), (2..12).collect::<Vec<_>>());
        assert_eq!(l.measures_of_activity("paragraph"), (12..16).collect::<Vec<_>>());
    }

    #[test]
    fn layout_rejects_bad_sets() {
        assert!(FeatureLayout::new(vec!["video_x".into()]).is_err());
        assert!(FeatureLayout::new(vec!["image_a".into(), "nback_b".into()]).is_err());
        assert!(FeatureLayout::new(vec!["image_a".into(), "image_a".into()]).is_err());
    }
}
