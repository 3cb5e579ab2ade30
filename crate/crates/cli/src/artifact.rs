//! Fitted-model artifact: pipeline states, graph, chain-tagged posterior
//! draws and diagnostics, sealed with a SHA-256 of the content.

use std::path::Path;

use mddbayes::dag::SymptomDag;
use mddbayes::features::{FittedPipeline, PipelineConfig};
use mddbayes::inference::PosteriorDraws;
use mddbayes::lingam::LingamConfig;
use mddbayes::nuts::McmcConfig;
use mddbayes::params::{ModelParams, ParamLayout};
use mddbayes::types::ModelShape;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{DataError, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encodings {
    pub age_group: Vec<String>,
    pub gender: Vec<String>,
    pub device: Vec<String>,
    pub condition: Vec<String>,
    pub symptom: Vec<String>,
    /// Feature set of each measure `m<j>`.
    pub measures: Vec<String>,
}

impl Encodings {
    pub fn new(pipeline: &FittedPipeline) -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        let layout = &pipeline.layout;
        let measures = (0..layout.n_measures())
            .map(|m| {
                let j = m / mddbayes::features::COMPONENTS;
                format!("{}:pc{}", layout.sets[j], m % mddbayes::features::COMPONENTS + 1)
            })
            .collect();
        Encodings {
            age_group: s(&["18-25", "26-35", "36-45", "46-100"]),
            gender: s(&["male", "female"]),
            device: s(&["smartphone", "pc"]),
            condition: s(&["absent", "present"]),
            symptom: s(&["low", "high"]),
            measures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub mcmc: McmcConfig,
    pub pipeline: PipelineConfig,
    /// `None` when the graph was supplied rather than discovered.
    pub lingam: Option<LingamConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub max_rhat: Option<f64>,
    pub min_ess_bulk: Option<f64>,
    pub divergences: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub parameters: Vec<ParameterSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub chain: usize,
    /// Constrained parameter vectors in `parameter_names` order.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactContent {
    pub encodings: Encodings,
    pub dag: SymptomDag,
    pub pipeline: FittedPipeline,
    pub fit_config: FitConfig,
    pub training: TrainingSummary,
    pub diagnostics: DiagnosticsSummary,
    pub parameter_names: Vec<String>,
    pub draws: Vec<ChainDraws>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    /// Hex SHA-256 of the compact JSON of `content`.
    pub sha256: String,
    pub content: ArtifactContent,
}

fn digest(content: &ArtifactContent) -> Result<String, DataError> {
    let bytes = serde_json::to_vec(content)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ModelArtifact {
    pub fn new(
        pipeline: FittedPipeline,
        post: &PosteriorDraws,
        fit_config: FitConfig,
        training: TrainingSummary,
    ) -> Result<Self, DataError> {
        let layout = post.layout();
        let names = layout.constrained_names();
        let draws = post
            .constrained()
            .into_iter()
            .enumerate()
            .map(|(chain, values)| ChainDraws { chain, values })
            .collect();
        let parameters = post
            .diagnostics
            .as_ref()
            .map(|d| {
                d.iter()
                    .zip(&names)
                    .map(|(d, n)| ParameterSummary {
                        name: n.clone(),
                        mean: d.mean,
                        sd: d.sd,
                        rhat: d.rhat,
                        ess_bulk: d.ess_bulk,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let min_ess_bulk = post
            .diagnostics
            .as_ref()
            .and_then(|d| d.iter().map(|x| x.ess_bulk).filter(|x| x.is_finite()).reduce(f64::min));
        let content = ArtifactContent {
            encodings: Encodings::new(&pipeline),
            dag: post.dag().clone(),
            pipeline,
            fit_config,
            training,
            diagnostics: DiagnosticsSummary {
                max_rhat: post.max_rhat(),
                min_ess_bulk,
                divergences: post.divergences.clone(),
                step_sizes: post.step_sizes.clone(),
                parameters,
            },
            parameter_names: names,
            draws,
        };
        Ok(ModelArtifact {
            schema_version: SCHEMA_VERSION,
            sha256: digest(&content)?,
            content,
        })
    }

    pub fn to_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and verifies version, hash and draw shapes.
    pub fn from_json(s: &str) -> Result<Self, DataError> {
        let a: ModelArtifact = serde_json::from_str(s)?;
        if a.schema_version != SCHEMA_VERSION {
            return Err(DataError::Artifact(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                a.schema_version
            )));
        }
        let want = digest(&a.content)?;
        if want != a.sha256 {
            return Err(DataError::Artifact("content hash does not match".into()));
        }
        a.layout()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_json()?).map_err(|e| DataError::Artifact(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let s = std::fs::read_to_string(path).map_err(|e| DataError::Artifact(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn shape(&self) -> Result<ModelShape, DataError> {
        Ok(self.content.pipeline.shape()?)
    }

    fn layout(&self) -> Result<ParamLayout, DataError> {
        let layout = ParamLayout::new(self.shape()?, &self.content.dag)?;
        if layout.constrained_names() != self.content.parameter_names {
            return Err(DataError::Artifact("parameter names disagree with the graph".into()));
        }
        if self.content.draws.is_empty() {
            return Err(DataError::Artifact("no posterior draws".into()));
        }
        Ok(layout)
    }

    /// Draws of all chains in chain order.
    pub fn params(&self) -> Result<Vec<ModelParams>, DataError> {
        let layout = self.layout()?;
        let mut out = Vec::new();
        for c in &self.content.draws {
            for v in &c.values {
                out.push(layout.from_constrained(v)?);
            }
        }
        Ok(out)
    }

    pub fn n_draws(&self) -> usize {
        self.content.draws.iter().map(|c| c.values.len()).sum()
    }
}
