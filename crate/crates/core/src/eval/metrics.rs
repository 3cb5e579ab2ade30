use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::ParticipantRecord;

/// Area under the ROC curve in Mann-Whitney form: the fraction of
/// positive-negative pairs ranked correctly, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Structural("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::value("scores", "non-finite score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives, with tied groups sharing the mid-rank
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u128;
        let pos_in_group = idx[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (n_pos as u128) * (n_pos as u128 + 1);
    Ok((twice_u as f64 / 2.0) / (n_pos as f64 * n_neg as f64))
}

/// Splits items with the given stratum keys into `k` folds: each stratum is
/// shuffled with `seed` and dealt round-robin, the dealing position carrying
/// over from one stratum to the next.
pub fn kfold_by_key<K: Ord + Clone>(keys: &[K], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::value("folds", "need at least 2"));
    }
    if keys.len() < k {
        return Err(Error::InsufficientData(format!("{} records for {k} folds", keys.len())));
    }
    let mut strata: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        strata.entry(key.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut counter = 0;
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[counter % k].push(i);
            counter += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

pub type StratumKey = (u8, u8, Option<u8>);

/// Gender × age group × condition.
pub fn stratum(r: &ParticipantRecord) -> StratumKey {
    (r.gender.code(), r.age.code(), r.condition().map(|c| c.code()))
}

pub fn stratified_kfold(records: &[ParticipantRecord], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let keys: Vec<StratumKey> = records.iter().map(stratum).collect();
    kfold_by_key(&keys, k, seed)
}

/// Mean and sample standard deviation (n - 1) of the defined values.
pub fn mean_sd(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    if v.len() < 2 {
        return (Some(m), None);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
    (Some(m), Some(var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_reference_cases() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_is_invariant_to_monotone_maps() {
        let s = [0.3, -1.0, 2.5, 0.3, 0.7, 1.1, -0.2];
        let l = [true, false, true, false, false, true, true];
        let base = roc_auc(&s, &l).unwrap();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        let aff: Vec<f64> = s.iter().map(|v| 3.0 * v - 7.0).collect();
        assert_eq!(roc_auc(&exp, &l).unwrap(), base);
        assert_eq!(roc_auc(&aff, &l).unwrap(), base);
    }

    #[test]
    fn folds_partition_indices() {
        let keys: Vec<u8> = (0..103).map(|i| (i % 7) as u8).collect();
        let folds = kfold_by_key(&keys, 5, 1).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn balanced_strata_give_identical_composition() {
        let keys: Vec<u8> = (0..100).map(|i| (i % 4) as u8).collect();
        let folds = kfold_by_key(&keys, 5, 2).unwrap();
        for f in &folds {
            let mut counts = [0; 4];
            f.iter().for_each(|&i| counts[keys[i] as usize] += 1);
            assert_eq!(counts, [5; 4]);
        }
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        let (m, s) = mean_sd(&[Some(1.0), Some(3.0), None]);
        assert_eq!(m, Some(2.0));
        assert_eq!(s, Some(2f64.sqrt()));
    }
}
