use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::inject_noise;
use super::train::{predict, train};
use super::TrainConfig;
use crate::data::{LabeledPair, Table};
use crate::embeddings::EmbeddingDictionary;
use crate::error::{Error, Result};
use crate::eval::MatchReport;

/// Fold index for every pair. Matches and non-matches are shuffled
/// separately and dealt round-robin, so each fold keeps the class ratio.
pub fn stratified_folds(pairs: &[LabeledPair], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if pairs.len() < k {
        return Err(Error::Precondition(format!("{} pairs cannot fill {k} folds", pairs.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..pairs.len()).partition(|&i| pairs[i].label.is_match());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold = vec![0; pairs.len()];
    for (j, &i) in pos.iter().chain(&neg).enumerate() {
        fold[i] = j % k;
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub report: MatchReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub folds: Vec<FoldOutcome>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    /// Sample standard deviation of per-fold F1.
    pub std_f1: f64,
}

impl KFoldReport {
    pub fn from_folds(folds: Vec<FoldOutcome>) -> Self {
        let n = folds.len() as f64;
        let mean = |f: fn(&FoldOutcome) -> f64| folds.iter().map(f).sum::<f64>() / n;
        let mean_precision = mean(|o| o.report.precision);
        let mean_recall = mean(|o| o.report.recall);
        let mean_f1 = mean(|o| o.report.f1);
        let std_f1 = if folds.len() > 1 {
            (folds.iter().map(|o| (o.report.f1 - mean_f1).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            folds,
            mean_precision,
            mean_recall,
            mean_f1,
            std_f1,
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "cv.folds={}\ncv.mean_precision={}\ncv.mean_recall={}\ncv.mean_f1={}\ncv.std_f1={}\n",
            self.folds.len(),
            self.mean_precision,
            self.mean_recall,
            self.mean_f1,
            self.std_f1
        );
        for o in &self.folds {
            s.push_str(&format!("cv.fold{}.f1={}\n", o.fold, o.report.f1));
        }
        s
    }
}

/// Runs `eval(fold, train, test)` for every fold of a stratified split.
pub fn kfold_with<F>(pairs: &[LabeledPair], k: usize, seed: u64, mut eval: F) -> Result<Vec<FoldOutcome>>
where
    F: FnMut(usize, &[LabeledPair], &[LabeledPair]) -> Result<MatchReport>,
{
    let assignment = stratified_folds(pairs, k, seed)?;
    (0..k)
        .map(|fold| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (p, &f) in pairs.iter().zip(&assignment) {
                if f == fold {
                    test.push(p.clone());
                } else {
                    train.push(p.clone());
                }
            }
            let report = eval(fold, &train, &test)?;
            Ok(FoldOutcome {
                fold,
                train_size: train.len(),
                test_size: test.len(),
                report,
            })
        })
        .collect()
}

/// Stratified K-fold evaluation of [`train`]. Label noise, when configured,
/// is injected into each training split only; test splits keep clean labels.
pub fn kfold_eval(
    pairs: &[LabeledPair],
    left: &Table,
    right: Option<&Table>,
    dict: &EmbeddingDictionary,
    cfg: &TrainConfig,
) -> Result<KFoldReport> {
    cfg.validate()?;
    let right_table = right.unwrap_or(left);
    let folds = kfold_with(pairs, cfg.folds, cfg.seed, |fold, tr, te| {
        let fold_seed = cfg.seed.wrapping_add(fold as u64 + 1);
        let tr = inject_noise(tr, cfg.noise_fraction, fold_seed)?;
        let fold_cfg = TrainConfig { seed: fold_seed, ..cfg.clone() };
        let (model, _) = train(&tr, left, right, dict, &fold_cfg)?;
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for p in te {
            let a = left.get(&p.left_id).ok_or_else(|| Error::Integrity(format!("unknown id {}", p.left_id)))?;
            let b = right_table
                .get(&p.right_id)
                .ok_or_else(|| Error::Integrity(format!("unknown id {}", p.right_id)))?;
            let (_, predicted) = predict(&model, a, b, dict)?;
            match (predicted.is_match(), p.label.is_match()) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Ok(MatchReport::from_counts(tp, fp, fn_, tn))
    })?;
    Ok(KFoldReport::from_folds(folds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;

    fn pairs(pos: usize, neg: usize) -> Vec<LabeledPair> {
        (0..pos)
            .map(|i| LabeledPair::new(format!("p{i}"), "x", Label::Match))
            .chain((0..neg).map(|i| LabeledPair::new(format!("n{i}"), "x", Label::NonMatch)))
            .collect()
    }

    #[test]
    fn folds_are_stratified_and_cover_everything() {
        let ps = pairs(10, 40);
        let f = stratified_folds(&ps, 5, 3).unwrap();
        for k in 0..5 {
            let pos = (0..ps.len()).filter(|&i| f[i] == k && ps[i].label.is_match()).count();
            let all = f.iter().filter(|&&x| x == k).count();
            assert_eq!(pos, 2);
            assert_eq!(all, 10);
        }
        assert_eq!(stratified_folds(&ps, 5, 3).unwrap(), f);
        assert!(stratified_folds(&ps, 1, 3).is_err());
        assert!(stratified_folds(&pairs(1, 1), 3, 3).is_err());
    }

    #[test]
    fn kfold_with_partitions_pairs() {
        let ps = pairs(6, 9);
        let mut seen = Vec::new();
        let out = kfold_with(&ps, 3, 1, |_, tr, te| {
            assert_eq!(tr.len() + te.len(), ps.len());
            assert!(te.iter().all(|p| !tr.contains(p)));
            seen.extend(te.iter().cloned());
            Ok(MatchReport::from_counts(1, 0, 0, 1))
        })
        .unwrap();
        assert_eq!(out.len(), 3);
        seen.sort_by(|a, b| a.left_id.cmp(&b.left_id));
        let mut all = ps.clone();
        all.sort_by(|a, b| a.left_id.cmp(&b.left_id));
        assert_eq!(seen, all);
    }

    #[test]
    fn report_statistics() {
        let mk = |fold, f1| FoldOutcome {
            fold,
            train_size: 0,
            test_size: 0,
            report: MatchReport { f1, ..MatchReport::from_counts(0, 0, 0, 0) },
        };
        let r = KFoldReport::from_folds(vec![mk(0, 0.8), mk(1, 1.0)]);
        assert!((r.mean_f1 - 0.9).abs() < 1e-12);
        assert!((r.std_f1 - 0.02f64.sqrt()).abs() < 1e-12);
    }
}
