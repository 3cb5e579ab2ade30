use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AgeGroup, Condition, Device, Gender, ModelShape};

/// A partial assignment of network variables.
///
/// Symptom and measure maps are keyed by zero-based index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<AgeGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<Device>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub symptoms: BTreeMap<usize, u8>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub measures: BTreeMap<usize, f64>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_confounds(age: AgeGroup, gender: Gender, device: Device) -> Self {
        Evidence {
            age: Some(age),
            gender: Some(gender),
            device: Some(device),
            ..Self::default()
        }
    }

    pub fn validate(&self, shape: &ModelShape) -> Result<()> {
        for (&s, &v) in &self.symptoms {
            if s >= shape.n_symptoms {
                return Err(Error::value(format!("symptom {s}"), "no such symptom"));
            }
            if v > 1 {
                return Err(Error::value(Target::Symptom(s).name(), format!("{v} not in {{0,1}}")));
            }
        }
        for (&m, &v) in &self.measures {
            if m >= shape.n_measures {
                return Err(Error::value(format!("m{m}"), "no such measure"));
            }
            if !v.is_finite() {
                return Err(Error::value(format!("m{m}"), "not finite"));
            }
        }
        Ok(())
    }

    /// Bit mask of observed symptoms and the mask of their values.
    pub fn symptom_masks(&self) -> (u32, u32) {
        self.symptoms
            .iter()
            .fold((0, 0), |(obs, val), (&s, &v)| (obs | 1 << s, val | (v as u32) << s))
    }

    pub fn observes(&self, t: Target) -> bool {
        match t {
            Target::Age => self.age.is_some(),
            Target::Gender => self.gender.is_some(),
            Target::Device => self.device.is_some(),
            Target::Condition => self.condition.is_some(),
            Target::Symptom(s) => self.symptoms.contains_key(&s),
        }
    }

    /// True when every discrete variable is observed.
    pub fn is_discrete_complete(&self, shape: &ModelShape) -> bool {
        Target::all(shape).into_iter().all(|t| self.observes(t))
    }
}

/// A discrete variable that can be queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Age,
    Gender,
    Device,
    Condition,
    /// Zero-based symptom index; named `phq8_{s+1}`.
    Symptom(usize),
}

impl Target {
    pub fn all(shape: &ModelShape) -> Vec<Target> {
        let mut v = vec![Target::Age, Target::Gender, Target::Device, Target::Condition];
        v.extend((0..shape.n_symptoms).map(Target::Symptom));
        v
    }

    /// Condition and every symptom not fixed by `ev`.
    pub fn defaults(shape: &ModelShape, ev: &Evidence) -> Vec<Target> {
        std::iter::once(Target::Condition)
            .chain((0..shape.n_symptoms).map(Target::Symptom))
            .filter(|t| !ev.observes(*t))
            .collect()
    }

    pub fn arity(self) -> usize {
        match self {
            Target::Age => AgeGroup::COUNT,
            _ => 2,
        }
    }

    pub fn name(self) -> String {
        match self {
            Target::Age => "age_group".into(),
            Target::Gender => "gender".into(),
            Target::Device => "device".into(),
            Target::Condition => "condition".into(),
            Target::Symptom(s) => format!("phq8_{}", s + 1),
        }
    }

    pub fn check(self, shape: &ModelShape) -> Result<()> {
        match self {
            Target::Symptom(s) if s >= shape.n_symptoms => {
                Err(Error::value("targets", format!("{} is not in this model", self.name())))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "age_group" => Ok(Target::Age),
            "gender" => Ok(Target::Gender),
            "device" => Ok(Target::Device),
            "condition" => Ok(Target::Condition),
            _ => s
                .strip_prefix("phq8_")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| Target::Symptom(k - 1))
                .ok_or_else(|| Error::value("targets", format!("unknown variable {s:?}"))),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_names_round_trip() {
        for t in Target::all(&ModelShape::default()) {
            assert_eq!(t.name().parse::<Target>().unwrap(), t);
        }
        assert!("phq8_0".parse::<Target>().is_err());
        assert!("mood".parse::<Target>().is_err());
    }

    #[test]
    fn masks_follow_symptom_values() {
        let mut ev = Evidence::new();
        ev.symptoms.insert(1, 1);
        ev.symptoms.insert(3, 0);
        assert_eq!(ev.symptom_masks(), (0b1010, 0b0010));
    }

    #[test]
    fn validation_rejects_bad_entries() {
        let shape = ModelShape::default();
        let mut ev = Evidence::new();
        ev.symptoms.insert(8, 1);
        assert!(ev.validate(&shape).is_err());
        let mut ev = Evidence::new();
        ev.symptoms.insert(0, 2);
        assert!(ev.validate(&shape).is_err());
        let mut ev = Evidence::new();
        ev.measures.insert(0, f64::NAN);
        assert!(ev.validate(&shape).is_err());
    }
}
