//! Cross-validated recall for the feasibility classifier.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{fit_classifier, ClassWeight, ForestHyperparams, MaxFeatures};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::space::FeatureKind;

/// Confusion counts with `true` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl BinaryCounts {
    pub fn record(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(predicted: &[bool], truth: &[bool]) -> Self {
        let mut c = Self::default();
        for (p, t) in predicted.iter().zip(truth) {
            c.record(*p, *t);
        }
        c
    }

    /// TP / (TP + FN); 1.0 when there are no positives to miss.
    pub fn recall(&self) -> f64 {
        let pos = self.tp + self.fn_;
        if pos == 0 {
            1.0
        } else {
            self.tp as f64 / pos as f64
        }
    }

    /// TP / (TP + FP); 1.0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        let predicted = self.tp + self.fp;
        if predicted == 0 {
            1.0
        } else {
            self.tp as f64 / predicted as f64
        }
    }
}

/// Mean held-out recall over `k` folds. Samples are shuffled once with `rng`
/// and dealt into contiguous folds; each fold's classifier is seeded from its
/// own child stream.
pub fn kfold_recall(
    x: &[Vec<f64>],
    labels: &[bool],
    kinds: &[FeatureKind],
    hp: &ForestHyperparams,
    k: usize,
    rng: RngState,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::Diagnostics(format!("k-fold needs k >= 2, got {k}")));
    }
    if x.len() != labels.len() {
        return Err(Error::Diagnostics(format!(
            "{} samples but {} labels",
            x.len(),
            labels.len()
        )));
    }
    if x.len() < k {
        return Err(Error::Diagnostics(format!("{} samples for {k} folds", x.len())));
    }
    if !labels.iter().any(|l| *l) {
        return Err(Error::Diagnostics("no positive labels".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut rng.rng());
    let n = x.len();
    let bounds: Vec<(usize, usize)> = (0..k).map(|f| (f * n / k, (f + 1) * n / k)).collect();
    let recalls = bounds
        .par_iter()
        .enumerate()
        .map(|(fold, &(lo, hi))| {
            let held = &order[lo..hi];
            let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            let tx: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let ty: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
            let model = fit_classifier(&tx, &ty, kinds, hp, rng.child(0xF01D, fold as u64))?;
            let mut counts = BinaryCounts::default();
            for &i in held {
                counts.record(model.predict_feasible_prob(&x[i])? >= 0.5, labels[i]);
            }
            Ok(counts.recall())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(recalls.iter().sum::<f64>() / k as f64)
}

/// The 3^4 = 81 classifier settings: estimators {10, 100, 1000}, depth
/// {unlimited, 4, 8}, features {auto, 0.5, 0.75}, feasible-class weight
/// {0.5, 0.75, 0.9}.
pub fn classifier_grid() -> Vec<ForestHyperparams> {
    let mut grid = Vec::with_capacity(81);
    for n_estimators in [10, 100, 1000] {
        for max_depth in [None, Some(4), Some(8)] {
            for max_features in [
                MaxFeatures::Auto,
                MaxFeatures::Fraction(0.5),
                MaxFeatures::Fraction(0.75),
            ] {
                for feasible in [0.5, 0.75, 0.9] {
                    grid.push(ForestHyperparams {
                        n_estimators,
                        max_depth,
                        max_features,
                        class_weight: ClassWeight {
                            feasible,
                            infeasible: 1.0 - feasible,
                        },
                        ..Default::default()
                    });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub hyperparams: ForestHyperparams,
    pub mean_recall: f64,
}

/// Mean k-fold recall of every setting in `grid`, all using the same folds.
pub fn grid_search_recall(
    x: &[Vec<f64>],
    labels: &[bool],
    kinds: &[FeatureKind],
    grid: &[ForestHyperparams],
    k: usize,
    rng: RngState,
) -> Result<Vec<GridResult>> {
    grid.iter()
        .map(|hp| {
            Ok(GridResult {
                hyperparams: *hp,
                mean_recall: kfold_recall(x, labels, kinds, hp, k, rng)?,
            })
        })
        .collect()
}
