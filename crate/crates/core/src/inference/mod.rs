//! Posterior fitting and partial-evidence prediction.

mod enumerate;
mod evidence;
mod fit;
mod predict;

pub use enumerate::{enumerate_posterior, Assignment, EnumTable, PreparedParams};
pub use evidence::{Evidence, Target};
pub use fit::{conjugate_confounds, fit, PosteriorDraws};
pub use predict::{
    predict, predict_with_draws, quantile_sorted, PredictionResult, Predictor, ProbabilityInterval,
    TargetPrediction, INTERVAL_LOWER, INTERVAL_UPPER,
};
