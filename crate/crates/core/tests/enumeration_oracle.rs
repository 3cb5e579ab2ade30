//! Marginals from `predict` against a brute-force joint built from scratch.

mod support;

use mddbayes::dag::SymptomDag;
use mddbayes::inference::{predict, Evidence, Predictor, Target};
use mddbayes::params::ModelParams;
use mddbayes::synthetic::sample_prior;
use mddbayes::types::ModelShape;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{oracle_marginals, random_dag, random_evidence};

#[test]
fn predict_matches_brute_force_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < 100 {
        let shape = if cases % 2 == 0 { ModelShape::default() } else { ModelShape::new(5, 3).unwrap() };
        let dag = random_dag(shape.n_symptoms, &mut rng);
        let p = sample_prior(shape, dag, &mut rng).unwrap();
        let ev = random_evidence(&shape, &mut rng);
        let targets: Vec<Target> = Target::all(&shape).into_iter().filter(|t| !ev.observes(*t)).collect();
        if targets.is_empty() {
            continue;
        }
        let want = oracle_marginals(&p, &ev, &targets);
        let got = predict(std::slice::from_ref(&p), &ev, &targets).unwrap();
        let full = Predictor::new(std::slice::from_ref(&p)).unwrap().predict(&ev, &targets).unwrap();
        for (t, w) in targets.iter().zip(&want) {
            for (v, wv) in w.iter().enumerate() {
                worst = worst.max((got.get(*t).unwrap().mean(v as u8) - wv).abs());
                worst = worst.max((full.get(*t).unwrap().mean(v as u8) - wv).abs());
            }
        }
        cases += 1;
    }
    assert!(worst < 1e-10, "max abs diff {worst:e}");
}

#[test]
fn empty_evidence_gives_prior_predictive_mean_over_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let shape = ModelShape::new(4, 2).unwrap();
    let draws: Vec<ModelParams> = (0..7)
        .map(|_| sample_prior(shape, SymptomDag::empty(4), &mut rng).unwrap())
        .collect();
    let ev = Evidence::new();
    let r = predict(&draws, &ev, &[Target::Condition]).unwrap();
    let want = draws
        .iter()
        .map(|p| oracle_marginals(p, &ev, &[Target::Condition])[0][1])
        .sum::<f64>()
        / 7.0;
    assert!((r.get(Target::Condition).unwrap().mean(1) - want).abs() < 1e-12);
}
