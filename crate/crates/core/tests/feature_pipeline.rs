use mddbayes::features::{fit_scaler, fit_supervised_pca, FeatureLayout, FittedPipeline, PipelineConfig};
use mddbayes::synthetic::{demo_dag, demo_params, sample_dataset, EffectSizes, GroundTruth, RawFeatureSpec};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // correlated columns so the spectrum is well separated
    let mix = DMatrix::<f64>::from_fn(d, d, |i, j| if i == j { (d - i) as f64 } else { 0.3 * rng.random_range(-1.0..1.0) });
    let z = DMatrix::<f64>::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    z * mix
}

/// Orthogonal projector onto the span of the given columns.
fn projector(cols: &DMatrix<f64>) -> DMatrix<f64> {
    cols * cols.transpose()
}

#[test]
fn zero_supervision_is_ordinary_pca() {
    let x = random_matrix(20, 5, 1);
    let y: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
    let st = fit_supervised_pca(&x, &y, 0.0).unwrap();
    // oracle: right singular vectors from an SVD of X itself
    let svd = x.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let oracle = DMatrix::from_fn(5, 2, |r, c| vt[(order[c], r)]);
    let ours = DMatrix::from_fn(5, 2, |r, c| st.loadings[c][r]);
    let gap = (projector(&oracle) - projector(&ours)).amax();
    assert!(gap < 1e-8, "{gap:e}");
}

#[test]
fn strong_supervision_aligns_with_predictive_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 400;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let mut x = DMatrix::<f64>::from_fn(n, 6, |_, _| StandardNormal.sample(&mut rng));
    for i in 0..n {
        // feature 4 carries the label with low variance
        x[(i, 4)] = 0.3 * (y[i] - 0.5) + 0.05 * x[(i, 4)];
    }
    let z = fit_scaler(&x).unwrap().transform(&x).unwrap();
    let st = fit_supervised_pca(&z, &y, 1e4).unwrap();
    assert!(st.loadings[0][4].abs() > 0.99, "{:?}", st.loadings[0]);
}

#[test]
fn projection_is_linear() {
    let x = random_matrix(50, 4, 3);
    let y: Vec<f64> = (0..50).map(|i| (i % 3 == 0) as u8 as f64).collect();
    let st = fit_supervised_pca(&x, &y, 1.0).unwrap();
    let a = random_matrix(10, 4, 4);
    let b = random_matrix(10, 4, 5);
    let lhs = st.project(&(&a * 2.5 - &b * 0.7)).unwrap();
    let rhs = st.project(&a).unwrap() * 2.5 - st.project(&b).unwrap() * 0.7;
    assert!((lhs - rhs).amax() < 1e-10);
}

#[test]
fn states_are_fitted_on_training_rows_only() {
    let raw = RawFeatureSpec::default();
    let params = demo_params(raw.layout.shape().unwrap(), demo_dag(), &EffectSizes::default(), 6).unwrap();
    let recs = sample_dataset(&GroundTruth { params, seed: 6, n: 400 }, &raw).unwrap().records;
    let (a, b) = recs.split_at(200);
    let layout = FeatureLayout::default();
    let pa = FittedPipeline::fit(a, &layout, &PipelineConfig::default()).unwrap();
    let pa2 = FittedPipeline::fit(a, &layout, &PipelineConfig::default()).unwrap();
    let pb = FittedPipeline::fit(b, &layout, &PipelineConfig::default()).unwrap();
    assert_eq!(pa, pa2);
    assert_ne!(pa.sets[0].scaler, pb.sets[0].scaler);

    // training rows standardize exactly; held-out rows in general do not
    let set = &layout.sets[1];
    let stats = |rows: &[mddbayes::types::ParticipantRecord]| {
        let z: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| pa.sets[1].scaler.transform_row(&r.features[set]).unwrap())
            .collect();
        let n = z.len() as f64;
        let mean = z.iter().map(|v| v[0]).sum::<f64>() / n;
        let var = z.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (m, s) = stats(a);
    assert!(m.abs() < 1e-10 && (s - 1.0).abs() < 1e-10);
    let (m, s) = stats(b);
    assert!(m.abs() > 1e-6 || (s - 1.0).abs() > 1e-6);
}
