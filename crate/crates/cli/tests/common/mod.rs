#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use mddbayes::features::{FittedPipeline, PipelineConfig};
use mddbayes::inference::{fit, PosteriorDraws};
use mddbayes::nuts::McmcConfig;
use mddbayes::synthetic::{demo_dag, demo_params, sample_dataset, EffectSizes, GroundTruth, RawFeatureSpec};
use mddbayes::types::ParticipantRecord;
use mddbayes_cli::artifact::{FitConfig, ModelArtifact, TrainingSummary};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mddbayes"));
    for (k, _) in std::env::vars() {
        if k.starts_with("MDDBAYES_") {
            c.env_remove(k);
        }
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn records(n: usize, seed: u64) -> Vec<ParticipantRecord> {
    let raw = RawFeatureSpec::default();
    let params = demo_params(raw.layout.shape().unwrap(), demo_dag(), &EffectSizes::default(), seed).unwrap();
    sample_dataset(&GroundTruth { params, seed, n }, &raw).unwrap().records
}

/// A small fitted model built in memory.
pub fn small_model() -> (ModelArtifact, PosteriorDraws) {
    let recs = records(300, 2);
    let raw = RawFeatureSpec::default();
    let pcfg = PipelineConfig::default();
    let pipeline = FittedPipeline::fit(&recs, &raw.layout, &pcfg).unwrap();
    let cases: Vec<_> = recs.iter().map(|r| pipeline.complete_case(r).unwrap().unwrap()).collect();
    let mcmc = McmcConfig {
        chains: 2,
        warmup_draws: 150,
        kept_draws: 100,
        seed: 4,
        ..McmcConfig::default()
    };
    let post = fit(&cases, &demo_dag(), &mcmc).unwrap();
    let art = ModelArtifact::new(
        pipeline,
        &post,
        FitConfig {
            mcmc,
            pipeline: pcfg,
            lingam: None,
        },
        TrainingSummary { n_records: recs.len() },
    )
    .unwrap();
    (art, post)
}
