use mddbayes::dag::SymptomDag;
use mddbayes::inference::{fit, Evidence, PreparedParams, Target};
use mddbayes::nuts::diagnostics::diagnostics;
use mddbayes::nuts::{nuts_sample, ChainOutput, McmcConfig};
use mddbayes::posterior::LogPosterior;
use mddbayes::synthetic::{demo_dag, demo_params, sample_case, sample_cases, EffectSizes, GroundTruth};
use mddbayes::types::ModelShape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SLEEP: usize = 2;

#[test]
fn sleep_evidence_moves_condition_with_its_weight() {
    let truth = demo_params(ModelShape::default(), demo_dag(), &EffectSizes::default(), 0).unwrap();
    let cases = sample_cases(&GroundTruth {
        params: truth.clone(),
        seed: 1,
        n: 600,
    });
    let cfg = McmcConfig {
        chains: 2,
        warmup_draws: 300,
        kept_draws: 300,
        seed: 0,
        ..McmcConfig::default()
    };
    let post = fit(&cases, &demo_dag(), &cfg).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let person = sample_case(&truth, &mut rng);
    let mut base = Evidence::with_confounds(person.age, person.gender, person.device);
    base.measures = person.measures.iter().copied().enumerate().collect();
    let mut high = base.clone();
    high.symptoms.insert(SLEEP, 1);
    let mut low = base.clone();
    low.symptoms.insert(SLEEP, 0);

    let draws = post.all();
    let mut agree = 0;
    for p in &draws {
        let prep = PreparedParams::new(p);
        let pc = |ev: &Evidence| prep.marginals(ev, &[Target::Condition]).unwrap()[0][1];
        let (b, h, l) = (pc(&base), pc(&high), pc(&low));
        let sign = p.symp_w[SLEEP][3].signum();
        if (h - b) * sign > 0.0 && (l - b) * sign < 0.0 {
            agree += 1;
        }
    }
    let frac = agree as f64 / draws.len() as f64;
    assert!(frac >= 0.95, "direction agreed in {frac}");
}

fn summarize(out: &[ChainOutput]) -> Vec<(f64, f64)> {
    let draws: Vec<Vec<Vec<f64>>> = out.iter().map(|c| c.draws.clone()).collect();
    diagnostics(&draws)
        .unwrap()
        .iter()
        .map(|d| (d.mean, d.mcse_mean))
        .collect()
}

#[test]
fn per_factor_sampling_matches_joint_sampling() {
    let shape = ModelShape::new(3, 2).unwrap();
    let mut adj = vec![vec![false; 3]; 3];
    adj[0][1] = true;
    adj[1][2] = true;
    let dag = SymptomDag::from_adjacency(adj).unwrap();
    let truth = demo_params(shape, dag.clone(), &EffectSizes::default(), 3).unwrap();
    let cases = sample_cases(&GroundTruth {
        params: truth,
        seed: 4,
        n: 300,
    });
    let post = LogPosterior::new(shape, &dag, &cases).unwrap();
    let cfg = |seed| McmcConfig {
        chains: 4,
        warmup_draws: 1000,
        kept_draws: 1000,
        seed,
        ..McmcConfig::default()
    };
    let joint = summarize(&nuts_sample(&post.regression_target(), None, &cfg(10)).unwrap());
    for (i, b) in post.blocks().into_iter().enumerate() {
        let block = summarize(&nuts_sample(&post.block_target(b), None, &cfg(20 + i as u64)).unwrap());
        for (k, j) in post.regression_range(b).enumerate() {
            let (ma, sa) = joint[j];
            let (mb, sb) = block[k];
            let tol = 3.0 * (sa * sa + sb * sb).sqrt();
            assert!((ma - mb).abs() < tol, "{b:?}[{k}]: joint {ma} block {mb} tol {tol}");
        }
    }
}
