//! JSON wire format for evidence and predictions.
//!
//! Evidence object keys (all optional): `age_group` (0-3), `gender`,
//! `device`, `condition` (0/1), `symptoms` (`{"phq8_3": 1}`), `measures`
//! (`{"m0": 0.4}`, zero-based) and `features` (raw vectors keyed by
//! feature set, mapped through the fitted pipeline).

use std::collections::BTreeMap;

use mddbayes::features::FittedPipeline;
use mddbayes::inference::{Evidence, PredictionResult, ProbabilityInterval, Target};
use mddbayes::types::{AgeGroup, Condition, Device, Gender, ModelShape};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{DataError, SCHEMA_VERSION};

const KEYS: [&str; 7] = ["age_group", "gender", "device", "condition", "symptoms", "measures", "features"];

fn code(v: &Value, field: &str, max: u8) -> Result<Option<u8>, DataError> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => n
            .as_u64()
            .filter(|x| *x <= max as u64)
            .map(|x| Some(x as u8))
            .ok_or_else(|| DataError::field(field, format!("{n} is not an integer in 0..={max}"))),
        other => Err(DataError::field(field, format!("expected an integer, found {other}"))),
    }
}

fn object<'a>(v: &'a Value, field: &str) -> Result<Option<&'a Map<String, Value>>, DataError> {
    match v {
        Value::Null => Ok(None),
        Value::Object(m) => Ok(Some(m)),
        other => Err(DataError::field(field, format!("expected an object, found {other}"))),
    }
}

fn number(v: &Value, field: &str) -> Result<f64, DataError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| DataError::field(field, format!("{v} is not a finite number")))
}

/// Converts a wire evidence object into model evidence.
pub fn parse_evidence(v: &Value, pipeline: &FittedPipeline) -> Result<Evidence, DataError> {
    let shape = pipeline.shape()?;
    let Some(obj) = object(v, "evidence")? else {
        return Ok(Evidence::new());
    };
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(DataError::field(k.clone(), "unknown evidence key"));
    }
    let get = |k: &str| obj.get(k).unwrap_or(&Value::Null);
    let mut ev = Evidence::new();
    ev.age = code(get("age_group"), "age_group", 3)?.map(|c| AgeGroup::new(c).expect("checked"));
    ev.gender = code(get("gender"), "gender", 1)?.map(|c| Gender::from_code(c).expect("checked"));
    ev.device = code(get("device"), "device", 1)?.map(|c| Device::from_code(c).expect("checked"));
    ev.condition = code(get("condition"), "condition", 1)?.map(|c| Condition::from_code(c).expect("checked"));
    if let Some(m) = object(get("symptoms"), "symptoms")? {
        for (k, v) in m {
            let field = format!("symptoms.{k}");
            let s = match k.parse::<Target>() {
                Ok(Target::Symptom(s)) if s < shape.n_symptoms => s,
                _ => return Err(DataError::field(field, "not a symptom of this model")),
            };
            if let Some(b) = code(v, &field, 1)? {
                ev.symptoms.insert(s, b);
            }
        }
    }
    if let Some(m) = object(get("features"), "features")? {
        let mut raw = BTreeMap::new();
        for (k, v) in m {
            let field = format!("features.{k}");
            let arr = v
                .as_array()
                .ok_or_else(|| DataError::field(&field, "expected an array of numbers"))?;
            let xs = arr.iter().map(|x| number(x, &field)).collect::<Result<Vec<_>, _>>()?;
            raw.insert(k.clone(), xs);
        }
        ev.measures = pipeline
            .measures(&raw)
            .map_err(|e| DataError::field("features", e.to_string()))?;
    }
    if let Some(m) = object(get("measures"), "measures")? {
        for (k, v) in m {
            let field = format!("measures.{k}");
            let j = k
                .strip_prefix('m')
                .and_then(|j| j.parse::<usize>().ok())
                .filter(|&j| j < shape.n_measures)
                .ok_or_else(|| DataError::field(&field, "not a measure of this model"))?;
            if v.is_null() {
                continue;
            }
            if ev.measures.contains_key(&j) {
                return Err(DataError::field(&field, "also given through features"));
            }
            ev.measures.insert(j, number(v, &field)?);
        }
    }
    ev.validate(&shape)?;
    Ok(ev)
}

/// Parses an optional list of target names.
pub fn parse_targets(v: Option<&Value>, shape: &ModelShape, ev: &Evidence) -> Result<Vec<Target>, DataError> {
    let Some(v) = v.filter(|v| !v.is_null()) else {
        return Ok(Target::defaults(shape, ev));
    };
    let arr = v
        .as_array()
        .ok_or_else(|| DataError::field("targets", "expected an array of variable names"))?;
    let mut out = Vec::with_capacity(arr.len());
    for t in arr {
        let name = t
            .as_str()
            .ok_or_else(|| DataError::field("targets", format!("{t} is not a variable name")))?;
        let t: Target = name.parse()?;
        t.check(shape)?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

/// Evidence in wire form.
pub fn evidence_json(ev: &Evidence) -> Value {
    let mut m = Map::new();
    if let Some(a) = ev.age {
        m.insert("age_group".into(), a.code().into());
    }
    if let Some(g) = ev.gender {
        m.insert("gender".into(), g.code().into());
    }
    if let Some(d) = ev.device {
        m.insert("device".into(), d.code().into());
    }
    if let Some(c) = ev.condition {
        m.insert("condition".into(), c.code().into());
    }
    if !ev.symptoms.is_empty() {
        let s: Map<String, Value> = ev
            .symptoms
            .iter()
            .map(|(&s, &v)| (Target::Symptom(s).name(), v.into()))
            .collect();
        m.insert("symptoms".into(), s.into());
    }
    if !ev.measures.is_empty() {
        let s: Map<String, Value> = ev.measures.iter().map(|(&j, &v)| (format!("m{j}"), v.into())).collect();
        m.insert("measures".into(), s.into());
    }
    Value::Object(m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetOut {
    pub target: Target,
    /// Posterior probability of value 1 with its 95% interval (binary
    /// variables only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub probabilities: Vec<ProbabilityInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionOut {
    pub schema_version: u32,
    pub model_sha256: String,
    pub n_draws: usize,
    pub evidence: Value,
    pub predictions: Vec<TargetOut>,
}

impl PredictionOut {
    pub fn new(model_sha256: &str, ev: &Evidence, r: &PredictionResult) -> Self {
        let predictions = r
            .predictions
            .iter()
            .map(|tp| {
                let pos = (tp.probabilities.len() == 2).then(|| &tp.probabilities[1]);
                TargetOut {
                    target: tp.target,
                    p: pos.map(|x| x.mean),
                    lower: pos.map(|x| x.lower),
                    upper: pos.map(|x| x.upper),
                    probabilities: tp.probabilities.clone(),
                }
            })
            .collect();
        PredictionOut {
            schema_version: SCHEMA_VERSION,
            model_sha256: model_sha256.to_string(),
            n_draws: r.n_draws,
            evidence: evidence_json(ev),
            predictions,
        }
    }
}
