use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mddbayes::dag::SymptomDag;
use mddbayes::eval::{default_scenarios, run_cv, CvConfig};
use mddbayes::features::{FittedPipeline, PipelineConfig};
use mddbayes::inference::fit;
use mddbayes::lingam::{discover_symptom_dag, LingamConfig};
use mddbayes::nuts::McmcConfig;
use mddbayes::synthetic::{demo_dag, demo_params, sample_dataset, EffectSizes, GroundTruth, RawFeatureSpec};
use mddbayes::types::ParticipantRecord;
use mddbayes_cli::artifact::{FitConfig, ModelArtifact, TrainingSummary};
use mddbayes_cli::dataset::{read_csv, write_csv, DatasetSchema};
use mddbayes_cli::server::{router, ApiError, AppState, LoadedModel};
use mddbayes_cli::{DataError, SCHEMA_VERSION};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "mddbayes", version, about = "Bayesian network for joint depression and symptom prediction")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "MDDBAYES_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SamplerArgs {
    #[arg(long, env = "MDDBAYES_CHAINS", default_value_t = 4)]
    chains: usize,
    #[arg(long, env = "MDDBAYES_WARMUP", default_value_t = 1000)]
    warmup: usize,
    #[arg(long, env = "MDDBAYES_DRAWS", default_value_t = 1000)]
    draws: usize,
    #[arg(long, env = "MDDBAYES_MAX_TREE_DEPTH", default_value_t = 10)]
    max_tree_depth: usize,
}

impl SamplerArgs {
    fn config(&self, seed: u64) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            warmup_draws: self.warmup,
            kept_draws: self.draws,
            max_tree_depth: self.max_tree_depth,
            seed,
            ..McmcConfig::default()
        }
    }
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Symptom graph JSON; discovered from the data when absent.
    #[arg(long, env = "MDDBAYES_DAG")]
    dag: Option<PathBuf>,
    /// Supervision strength of the supervised PCA.
    #[arg(long, env = "MDDBAYES_MU", default_value_t = 1.0)]
    mu: f64,
    /// Minimum absolute standardized coefficient kept as an edge.
    #[arg(long, env = "MDDBAYES_PRUNE_THRESHOLD", default_value_t = 0.05)]
    prune_threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Effects {
    Moderate,
    Strong,
    Null,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset from the demo ground truth.
    Simulate {
        #[arg(long, env = "MDDBAYES_N", default_value_t = 500)]
        n: usize,
        #[arg(long, value_enum, default_value = "moderate")]
        effects: Effects,
        /// Probability that each activity is missing for a participant.
        #[arg(long, default_value_t = 0.0)]
        missing_prob: f64,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the ground-truth parameters as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Discover the symptom graph from PHQ-8 items.
    DiscoverDag {
        #[arg(long, env = "MDDBAYES_DATA")]
        data: PathBuf,
        #[arg(long, env = "MDDBAYES_PRUNE_THRESHOLD", default_value_t = 0.05)]
        prune_threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit pipeline, graph and posterior; write a model artifact.
    Fit {
        #[arg(long, env = "MDDBAYES_DATA")]
        data: PathBuf,
        #[arg(long, env = "MDDBAYES_ARTIFACT")]
        artifact: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Posterior marginals for one evidence object.
    Predict {
        #[arg(long, env = "MDDBAYES_ARTIFACT")]
        artifact: PathBuf,
        /// Evidence JSON, or `@path` to read it from a file.
        #[arg(long, default_value = "{}")]
        evidence: String,
        /// Comma-separated targets (default: condition and unobserved symptoms).
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<String>>,
    },
    /// Stratified cross-validation over the scenario grid.
    Evaluate {
        #[arg(long, env = "MDDBAYES_DATA")]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Posterior draws used to score test participants.
        #[arg(long, default_value_t = 200)]
        score_draws: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Report JSON path; the text table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP JSON API.
    Serve {
        #[arg(long, env = "MDDBAYES_ARTIFACT")]
        artifact: Option<PathBuf>,
        #[arg(long, env = "MDDBAYES_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "MDDBAYES_PORT", default_value_t = 8080)]
        port: u16,
        /// Maximum concurrent prediction jobs.
        #[arg(long, env = "MDDBAYES_WORKERS", default_value_t = 4)]
        workers: usize,
        /// Directory of static UI assets served at `/`.
        #[arg(long, env = "MDDBAYES_ASSETS")]
        assets: Option<PathBuf>,
    },
}

fn load_records(path: &Path) -> Result<(DatasetSchema, Vec<ParticipantRecord>)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (schema, recs) = read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    Ok((schema, recs))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

/// Accepts a bare graph or the `discover-dag` output.
fn read_dag(path: &Path) -> Result<SymptomDag> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&s).map_err(DataError::from)?;
    let inner = v.get("dag").cloned().unwrap_or(v);
    let dag: SymptomDag = serde_json::from_value(inner).map_err(DataError::from)?;
    Ok(dag)
}

fn lingam_config(prune_threshold: f64, seed: u64) -> LingamConfig {
    LingamConfig { prune_threshold, seed }
}

fn simulate(
    seed: u64,
    n: usize,
    effects: Effects,
    missing_prob: f64,
    out: Option<&Path>,
    truth: Option<&Path>,
) -> Result<()> {
    if !(0.0..=1.0).contains(&missing_prob) {
        return Err(DataError::field("missing-prob", "must be in [0, 1]").into());
    }
    let raw = RawFeatureSpec {
        missing_prob,
        ..RawFeatureSpec::default()
    };
    let eff = match effects {
        Effects::Moderate => EffectSizes::default(),
        Effects::Strong => EffectSizes {
            measure_condition: 1.5,
            ..EffectSizes::default()
        },
        Effects::Null => EffectSizes::null(),
    };
    let params = demo_params(raw.layout.shape()?, demo_dag(), &eff, seed)?;
    let gt = GroundTruth { params, seed, n };
    let ds = sample_dataset(&gt, &raw)?;
    let schema = DatasetSchema {
        layout: raw.layout.clone(),
        widths: raw.dims.clone(),
        country: true,
    };
    let mut buf = Vec::new();
    write_csv(&mut buf, &schema, &ds.records)?;
    write_out(out, &buf)?;
    if let Some(t) = truth {
        let v = json!({ "schema_version": SCHEMA_VERSION, "seed": seed, "n": n, "params": gt.params });
        std::fs::write(t, serde_json::to_vec_pretty(&v)?).with_context(|| format!("writing {}", t.display()))?;
    }
    Ok(())
}

fn discover(seed: u64, data: &Path, prune_threshold: f64, out: Option<&Path>) -> Result<()> {
    let (_, recs) = load_records(data)?;
    let d = discover_symptom_dag(&recs, &lingam_config(prune_threshold, seed))?;
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "dag": d.dag,
        "causal_order": d.order,
        "constant_items": d.constant_items,
        "ridge_fallback": d.ridge_fallback,
    });
    let mut s = serde_json::to_vec_pretty(&v)?;
    s.push(b'\n');
    write_out(out, &s)
}

fn fit_cmd(seed: u64, data: &Path, artifact: &Path, model: &ModelArgs, sampler: &SamplerArgs) -> Result<()> {
    let (schema, recs) = load_records(data)?;
    let pcfg = PipelineConfig { mu: model.mu };
    let pipeline = FittedPipeline::fit(&recs, &schema.layout, &pcfg)?;
    let (dag, lingam) = match &model.dag {
        Some(p) => (read_dag(p)?, None),
        None => {
            let lc = lingam_config(model.prune_threshold, seed);
            (discover_symptom_dag(&recs, &lc)?.dag, Some(lc))
        }
    };
    let mut cases = Vec::with_capacity(recs.len());
    for r in &recs {
        match pipeline.complete_case(r)? {
            Some(c) => cases.push(c),
            None => bail!(DataError::Invalid(format!(
                "record {} is incomplete; training needs PHQ-8 items and every feature set",
                r.id
            ))),
        }
    }
    let mcmc = sampler.config(seed);
    let post = fit(&cases, &dag, &mcmc)?;
    let art = ModelArtifact::new(
        pipeline,
        &post,
        FitConfig {
            mcmc,
            pipeline: pcfg,
            lingam,
        },
        TrainingSummary {
            n_records: recs.len(),
        },
    )?;
    art.save(artifact)?;
    eprintln!(
        "fit: {} draws, max R-hat {}, {} divergences, sha256 {}",
        art.n_draws(),
        post.max_rhat().map_or("n/a".into(), |r| format!("{r:.4}")),
        post.total_divergences(),
        art.sha256
    );
    Ok(())
}

fn predict_cmd(artifact: &Path, evidence: &str, targets: Option<&[String]>) -> Result<()> {
    let model = LoadedModel::new(ModelArtifact::load(artifact)?)?;
    let text = match evidence.strip_prefix('@') {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {p}"))?,
        None => evidence.to_string(),
    };
    let ev: Value = serde_json::from_str(&text).map_err(|e| DataError::field("evidence", e.to_string()))?;
    let mut body = json!({ "evidence": ev });
    if let Some(t) = targets {
        body["targets"] = json!(t);
    }
    let out = model.predict_request(&body)?;
    let mut s = serde_json::to_vec_pretty(&out)?;
    s.push(b'\n');
    write_out(None, &s)
}

fn evaluate(
    seed: u64,
    data: &Path,
    folds: usize,
    score_draws: usize,
    model: &ModelArgs,
    sampler: &SamplerArgs,
    out: Option<&Path>,
) -> Result<()> {
    let (schema, recs) = load_records(data)?;
    let cfg = CvConfig {
        folds,
        seed,
        mcmc: sampler.config(seed),
        lingam: lingam_config(model.prune_threshold, seed),
        pipeline: PipelineConfig { mu: model.mu },
        layout: schema.layout.clone(),
        score_draws,
        fixed_dag: model.dag.as_deref().map(read_dag).transpose()?,
    };
    let scenarios = default_scenarios(&schema.layout, schema.layout.shape()?.n_symptoms);
    let res = run_cv(&recs, &scenarios, &cfg)?;
    if let Some(p) = out {
        let v = json!({ "schema_version": SCHEMA_VERSION, "report": res.report });
        std::fs::write(p, serde_json::to_vec_pretty(&v)?).with_context(|| format!("writing {}", p.display()))?;
    }
    write_out(None, res.report.to_text().as_bytes())
}

async fn serve(artifact: Option<&Path>, host: &str, port: u16, workers: usize, assets: Option<PathBuf>) -> Result<()> {
    let model = artifact
        .map(|p| ModelArtifact::load(p).and_then(LoadedModel::new))
        .transpose()?;
    if model.is_none() {
        eprintln!("serve: no artifact given, prediction endpoints answer 503");
    }
    let app = router(AppState::new(model, workers), assets);
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    eprintln!("serve: listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn model_code(m: &mddbayes::Error) -> u8 {
    match m {
        mddbayes::Error::Numerical(_) | mddbayes::Error::Sampler(_) => 3,
        _ => 2,
    }
}

/// 2 for bad input, 3 for numerical failure, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(m) = cause.downcast_ref::<mddbayes::Error>() {
            return model_code(m);
        }
        if let Some(DataError::Model(m)) = cause.downcast_ref::<DataError>() {
            return model_code(m);
        }
        if let Some(a) = cause.downcast_ref::<ApiError>() {
            return if a.status.is_server_error() { 3 } else { 2 };
        }
        if cause.is::<DataError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate {
            n,
            effects,
            missing_prob,
            out,
            truth,
        } => simulate(seed, n, effects, missing_prob, out.as_deref(), truth.as_deref()),
        Command::DiscoverDag {
            data,
            prune_threshold,
            out,
        } => discover(seed, &data, prune_threshold, out.as_deref()),
        Command::Fit {
            data,
            artifact,
            model,
            sampler,
        } => fit_cmd(seed, &data, &artifact, &model, &sampler),
        Command::Predict {
            artifact,
            evidence,
            targets,
        } => predict_cmd(&artifact, &evidence, targets.as_deref()),
        Command::Evaluate {
            data,
            folds,
            score_draws,
            model,
            sampler,
            out,
        } => evaluate(seed, &data, folds, score_draws, &model, &sampler, out.as_deref()),
        Command::Serve {
            artifact,
            host,
            port,
            workers,
            assets,
        } => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()?
            .block_on(serve(artifact.as_deref(), &host, port, workers, assets)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
