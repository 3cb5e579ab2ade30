use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::features::FeatureLayout;
use crate::inference::{Evidence, Target};
use crate::types::ModelShape;

/// A named evidence template: which variable groups are observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub confounds: bool,
    /// Activities whose measures are observed.
    pub activities: Vec<String>,
    /// Zero-based symptoms observed.
    pub symptoms: Vec<usize>,
}

impl ScenarioSpec {
    /// Restricts a participant's full evidence to this template.
    pub fn evidence(&self, full: &Evidence, layout: &FeatureLayout) -> Evidence {
        let mut ev = Evidence::new();
        if self.confounds {
            ev.age = full.age;
            ev.gender = full.gender;
            ev.device = full.device;
        }
        let measures: Vec<usize> = self
            .activities
            .iter()
            .flat_map(|a| layout.measures_of_activity(a))
            .collect();
        ev.measures = full
            .measures
            .iter()
            .filter(|(m, _)| measures.contains(m))
            .map(|(&m, &v)| (m, v))
            .collect();
        ev.symptoms = self
            .symptoms
            .iter()
            .filter_map(|s| full.symptoms.get(s).map(|&v| (*s, v)))
            .collect::<BTreeMap<_, _>>();
        ev
    }

    /// Condition and every symptom the template leaves unobserved.
    pub fn targets(&self, shape: &ModelShape) -> Vec<Target> {
        std::iter::once(Target::Condition)
            .chain(
                (0..shape.n_symptoms)
                    .filter(|s| !self.symptoms.contains(s))
                    .map(Target::Symptom),
            )
            .collect()
    }
}

pub const CONFOUNDS_ONLY: &str = "confounds";
pub const ALL_ACTIVITIES: &str = "all_activities";

/// Confounds only; plus each activity; plus each pair of activities; plus
/// all activities; all activities plus each single symptom.
pub fn default_scenarios(layout: &FeatureLayout, n_symptoms: usize) -> Vec<ScenarioSpec> {
    let acts: Vec<String> = layout.activities().into_iter().map(String::from).collect();
    let spec = |name: String, activities: Vec<String>, symptoms: Vec<usize>| ScenarioSpec {
        name,
        confounds: true,
        activities,
        symptoms,
    };
    let mut out = vec![spec(CONFOUNDS_ONLY.into(), vec![], vec![])];
    for a in &acts {
        out.push(spec(format!("confounds+{a}"), vec![a.clone()], vec![]));
    }
    if acts.len() > 2 {
        for i in 0..acts.len() {
            for j in i + 1..acts.len() {
                out.push(spec(
                    format!("confounds+{}+{}", acts[i], acts[j]),
                    vec![acts[i].clone(), acts[j].clone()],
                    vec![],
                ));
            }
        }
    }
    out.push(spec(ALL_ACTIVITIES.into(), acts.clone(), vec![]));
    for s in 0..n_symptoms {
        out.push(spec(format!("{ALL_ACTIVITIES}+{}", Target::Symptom(s)), acts.clone(), vec![s]));
    }
    out
}

/// Names of the single-activity scenarios in `scenarios`.
pub fn single_activity_names(layout: &FeatureLayout) -> Vec<String> {
    layout.activities().iter().map(|a| format!("confounds+{a}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AgeGroup, Device, Gender};

    #[test]
    fn default_grid_has_every_family() {
        let grid = default_scenarios(&FeatureLayout::default(), 8);
        assert_eq!(grid.len(), 1 + 3 + 3 + 1 + 8);
        assert_eq!(grid[0].name, "confounds");
        assert_eq!(grid[7].name, "all_activities");
        assert_eq!(grid[8].name, "all_activities+phq8_1");
    }

    #[test]
    fn evidence_is_restricted_to_template() {
        let layout = FeatureLayout::default();
        let mut full = Evidence::with_confounds(AgeGroup::new(1).unwrap(), Gender::Male, Device::Pc);
        for m in 0..16 {
            full.measures.insert(m, m as f64);
        }
        for s in 0..8 {
            full.symptoms.insert(s, 1);
        }
        let grid = default_scenarios(&layout, 8);
        let nback = grid.iter().find(|s| s.name == "confounds+nback").unwrap();
        let ev = nback.evidence(&full, &layout);
        assert_eq!(ev.measures.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert!(ev.symptoms.is_empty());
        let last = grid.last().unwrap();
        let ev = last.evidence(&full, &layout);
        assert_eq!(ev.measures.len(), 16);
        assert_eq!(ev.symptoms.len(), 1);
        let targets = last.targets(&ModelShape::default());
        assert_eq!(targets.len(), 8);
        assert!(!targets.contains(&Target::Symptom(7)));
    }
}
