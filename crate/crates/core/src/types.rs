//! Domain types for the confound, condition, symptom and measure variables.
//!
//! Binary codes are fixed: male=0/female=1, smartphone=0/PC=1, and
//! condition 1 means a PHQ-8 total of at least 10.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of PHQ-8 items.
pub const PHQ8_ITEMS: usize = 8;
/// PHQ-8 total at or above which the condition is present.
pub const PHQ8_CUTOFF: u32 = 10;
/// Number of activity measures in the full model.
pub const N_MEASURES: usize = 16;
/// Largest symptom count the enumeration tables support.
pub const MAX_SYMPTOMS: usize = 12;

/// Age band code: 0 = 18-25, 1 = 26-35, 2 = 36-45, 3 = 46-100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct AgeGroup(u8);

impl AgeGroup {
    pub const COUNT: usize = 4;

    pub fn new(code: u8) -> Result<Self> {
        if (code as usize) < Self::COUNT {
            Ok(AgeGroup(code))
        } else {
            Err(Error::value("age_group", format!("{code} not in 0..=3")))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = AgeGroup> {
        (0..Self::COUNT as u8).map(AgeGroup)
    }

    /// Lower bound in years of the band.
    pub fn lower_age(self) -> u32 {
        [18, 26, 36, 46][self.0 as usize]
    }
}

impl TryFrom<u8> for AgeGroup {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        AgeGroup::new(v)
    }
}

impl From<AgeGroup> for u8 {
    fn from(a: AgeGroup) -> u8 {
        a.0
    }
}

macro_rules! binary_code {
    ($(#[$meta:meta])* $name:ident, $field:literal, $zero:ident, $one:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "u8", into = "u8")]
        pub enum $name {
            $zero = 0,
            $one = 1,
        }

        impl $name {
            pub fn from_code(code: u8) -> Result<Self> {
                match code {
                    0 => Ok($name::$zero),
                    1 => Ok($name::$one),
                    _ => Err(Error::value($field, format!("{code} not in {{0,1}}"))),
                }
            }

            pub fn code(self) -> u8 {
                self as u8
            }

            pub fn from_bit(bit: bool) -> Self {
                if bit { $name::$one } else { $name::$zero }
            }
        }

        impl TryFrom<u8> for $name {
            type Error = Error;
            fn try_from(v: u8) -> Result<Self> {
                $name::from_code(v)
            }
        }

        impl From<$name> for u8 {
            fn from(v: $name) -> u8 {
                v.code()
            }
        }
    };
}

binary_code!(Gender, "gender", Male, Female);
binary_code!(Device, "device", Smartphone, Pc);
binary_code!(
    /// Depression indicator; `Present` iff PHQ-8 total >= 10.
    Condition,
    "condition",
    Absent,
    Present
);

impl Condition {
    pub fn from_phq8(items: &[u8]) -> Condition {
        let total: u32 = items.iter().map(|&v| v as u32).sum();
        Condition::from_bit(total >= PHQ8_CUTOFF)
    }
}

/// Numbers of symptom and measure variables in a model.
///
/// The full model uses 8 symptoms and 16 measures; smaller shapes are used
/// for calibration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_symptoms: usize,
    pub n_measures: usize,
}

impl ModelShape {
    pub fn new(n_symptoms: usize, n_measures: usize) -> Result<Self> {
        if n_symptoms == 0 || n_symptoms > MAX_SYMPTOMS {
            return Err(Error::Structural(format!(
                "symptom count {n_symptoms} outside 1..={MAX_SYMPTOMS}"
            )));
        }
        Ok(ModelShape {
            n_symptoms,
            n_measures,
        })
    }

    /// Covariates of a measure regression: intercept, A, G, D, C, then symptoms.
    pub fn measure_width(&self) -> usize {
        5 + self.n_symptoms
    }
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            n_symptoms: PHQ8_ITEMS,
            n_measures: N_MEASURES,
        }
    }
}

/// Binary symptom levels (0 = low, 1 = high), ordered by item index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymptomVector(Vec<u8>);

impl SymptomVector {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::value(format!("symptom {i}"), format!("{v} not in {{0,1}}")));
        }
        if values.len() > MAX_SYMPTOMS {
            return Err(Error::Structural(format!("{} symptoms", values.len())));
        }
        Ok(SymptomVector(values))
    }

    pub fn from_mask(mask: u32, len: usize) -> Self {
        SymptomVector((0..len).map(|s| ((mask >> s) & 1) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, s: usize) -> u8 {
        self.0[s]
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    /// Bit `s` set iff symptom `s` is high.
    pub fn mask(&self) -> u32 {
        self.0
            .iter()
            .enumerate()
            .fold(0u32, |m, (s, &v)| m | ((v as u32) << s))
    }
}

/// A fully observed training case: confounds, condition, binary symptoms
/// and every activity measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteCase {
    pub age: AgeGroup,
    pub gender: Gender,
    pub device: Device,
    pub condition: Condition,
    pub symptoms: SymptomVector,
    pub measures: Vec<f64>,
}

impl CompleteCase {
    pub fn check_shape(&self, shape: &ModelShape) -> Result<()> {
        if self.symptoms.len() != shape.n_symptoms {
            return Err(Error::Structural(format!(
                "case has {} symptoms, model expects {}",
                self.symptoms.len(),
                shape.n_symptoms
            )));
        }
        if self.measures.len() != shape.n_measures {
            return Err(Error::Structural(format!(
                "case has {} measures, model expects {}",
                self.measures.len(),
                shape.n_measures
            )));
        }
        if let Some(m) = self.measures.iter().position(|v| !v.is_finite()) {
            return Err(Error::value(format!("measure {m}"), "not finite"));
        }
        Ok(())
    }
}

/// One participant as ingested: confounds, optional raw PHQ-8 items and
/// optional raw feature vectors keyed by feature-set name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub age: AgeGroup,
    pub gender: Gender,
    pub device: Device,
    pub phq8: Option<[u8; PHQ8_ITEMS]>,
    pub condition: Option<Condition>,
    pub features: BTreeMap<String, Vec<f64>>,
    pub metadata: BTreeMap<String, String>,
}

impl ParticipantRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(items) = &self.phq8 {
            if let Some((i, v)) = items.iter().enumerate().find(|(_, &v)| v > 3) {
                return Err(Error::value(format!("phq8_{}", i + 1), format!("{v} not in 0..=3")));
            }
            if let Some(c) = self.condition {
                if c != Condition::from_phq8(items) {
                    return Err(Error::value(
                        "condition",
                        "disagrees with the PHQ-8 total cutoff",
                    ));
                }
            }
        }
        for (name, v) in &self.features {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::value(name.clone(), "non-finite feature"));
            }
        }
        Ok(())
    }

    /// Condition from the record, deriving it from PHQ-8 items when needed.
    pub fn condition(&self) -> Option<Condition> {
        self.condition
            .or_else(|| self.phq8.as_ref().map(|items| Condition::from_phq8(items)))
    }
}
