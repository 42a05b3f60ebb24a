//! Randomized decision forests: per-objective regressors and the
//! feasibility classifier.
//!
//! Each tree is grown on a bootstrap resample (sample counts become sample
//! weights) and considers a random subset of features at every node. Ordered
//! features split on midpoints between consecutive distinct values,
//! unordered (categorical) features on one-vs-rest level equality.
//!
//! Tree `i` draws from the stream `(seed ^ i, stream_id)` of the forest's
//! [`RngState`], so a fit is bit-identical whatever the thread count.

mod cv;
mod tree;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::space::FeatureKind;

pub use cv::{classifier_grid, grid_search_recall, kfold_recall, BinaryCounts, GridResult};
pub use tree::{SplitTest, Tree, TreeNode};

use tree::{Criterion, Sample, TreeBuilder, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxFeatures {
    /// All features for regressors, `ceil(sqrt(d))` for classifiers.
    Auto,
    /// `max(1, floor(fraction * d))` features.
    Fraction(f64),
}

/// Class weights for the feasibility classifier; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeight {
    pub feasible: f64,
    pub infeasible: f64,
}

impl Default for ClassWeight {
    fn default() -> Self {
        Self {
            feasible: 0.75,
            infeasible: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestHyperparams {
    pub n_estimators: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    /// Classifier only.
    pub class_weight: ClassWeight,
    pub bootstrap: bool,
    pub min_samples_split: usize,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 10,
            max_depth: None,
            max_features: MaxFeatures::Auto,
            class_weight: ClassWeight::default(),
            bootstrap: true,
            min_samples_split: 2,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::validation("n_estimators", "must be at least 1"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::validation("max_depth", "must be at least 1"));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::validation(
                    "max_features",
                    format!("fraction {f} outside (0, 1]"),
                ));
            }
        }
        let ClassWeight { feasible, infeasible } = self.class_weight;
        if !(feasible > 0.0 && infeasible > 0.0) || ((feasible + infeasible) - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "class_weight",
                format!("weights ({feasible}, {infeasible}) must be positive and sum to 1"),
            ));
        }
        if self.min_samples_split == 0 {
            return Err(Error::validation("min_samples_split", "must be at least 1"));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize, kind: ForestKind) -> usize {
        let n = match (self.max_features, kind) {
            (MaxFeatures::Auto, ForestKind::Regressor) => d,
            (MaxFeatures::Auto, ForestKind::Classifier) => (d as f64).sqrt().ceil() as usize,
            (MaxFeatures::Fraction(f), _) => (f * d as f64).floor() as usize,
        };
        n.clamp(1, d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestKind {
    Regressor,
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    kind: ForestKind,
    n_features: usize,
    trees: Vec<Tree>,
    /// Mean over trees of the raw impurity decrease per feature.
    raw_importance: Vec<f64>,
}

fn check_training_set(x: &[Vec<f64>], n_targets: usize, kinds: &[FeatureKind]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Fit("empty training set".into()));
    }
    if x.len() != n_targets {
        return Err(Error::Fit(format!(
            "{} feature vectors but {} targets",
            x.len(),
            n_targets
        )));
    }
    let d = kinds.len();
    if d == 0 {
        return Err(Error::Fit("no features".into()));
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::Fit(format!(
            "feature vector of length {} where {} were expected",
            row.len(),
            d
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite feature value".into()));
    }
    Ok(d)
}

fn bootstrap_counts(n: usize, hp: &ForestHyperparams, rng: &mut impl rand::Rng) -> Vec<u32> {
    if !hp.bootstrap {
        return vec![1; n];
    }
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

fn fit(
    x: &[Vec<f64>],
    targets: &[f64],
    kinds: &[FeatureKind],
    hp: &ForestHyperparams,
    rng: RngState,
    kind: ForestKind,
) -> Result<Forest> {
    hp.validate()?;
    let d = check_training_set(x, targets.len(), kinds)?;
    let max_features = hp.features_per_split(d, kind);
    let criterion = match kind {
        ForestKind::Regressor => Criterion::Variance,
        ForestKind::Classifier => Criterion::Gini,
    };
    let grown: Vec<(Tree, Vec<f64>)> = (0..hp.n_estimators)
        .into_par_iter()
        .map(|i| {
            let mut tree_rng = RngState::new(rng.seed ^ i as u64, rng.stream_id).rng();
            let counts = bootstrap_counts(x.len(), hp, &mut tree_rng);
            let class_totals = match kind {
                ForestKind::Classifier => targets.iter().zip(&counts).fold([0.0f64; 2], |mut acc, (t, c)| {
                    acc[usize::from(*t > 0.5)] += f64::from(*c);
                    acc
                }),
                ForestKind::Regressor => [1.0, 1.0],
            };
            let samples: Vec<Sample> = counts
                .iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(|(row, &c)| {
                    let target = targets[row];
                    let weight = match kind {
                        ForestKind::Regressor => f64::from(c),
                        ForestKind::Classifier => {
                            let (w, total) = if target > 0.5 {
                                (hp.class_weight.feasible, class_totals[1])
                            } else {
                                (hp.class_weight.infeasible, class_totals[0])
                            };
                            f64::from(c) * w / total
                        }
                    };
                    Sample { row, weight, target }
                })
                .collect();
            let params = TreeParams {
                criterion,
                kinds,
                max_features,
                max_depth: hp.max_depth,
                min_samples_split: hp.min_samples_split,
            };
            TreeBuilder::new(x, params, tree_rng).build(samples)
        })
        .collect();

    let mut raw_importance = vec![0.0; d];
    for (_, imp) in &grown {
        for (acc, v) in raw_importance.iter_mut().zip(imp) {
            *acc += v;
        }
    }
    let n_trees = grown.len() as f64;
    raw_importance.iter_mut().for_each(|v| *v /= n_trees);
    Ok(Forest {
        kind,
        n_features: d,
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        raw_importance,
    })
}

/// Fits a regression forest; leaves hold the mean target of their samples.
pub fn fit_regressor(
    x: &[Vec<f64>],
    y: &[f64],
    kinds: &[FeatureKind],
    hp: &ForestHyperparams,
    rng: RngState,
) -> Result<Forest> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite regression target".into()));
    }
    fit(x, y, kinds, hp, rng, ForestKind::Regressor)
}

/// Fits the feasibility classifier with class-weighted Gini impurity.
/// `true` labels are the positive (feasible) class.
pub fn fit_classifier(
    x: &[Vec<f64>],
    labels: &[bool],
    kinds: &[FeatureKind],
    hp: &ForestHyperparams,
    rng: RngState,
) -> Result<Forest> {
    let targets: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    fit(x, &targets, kinds, hp, rng, ForestKind::Classifier)
}

impl Forest {
    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    fn mean_over_trees(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        if self.trees.is_empty() {
            return Err(Error::State("forest has no trees".into()));
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict_regression(&self, x: &[f64]) -> Result<f64> {
        if self.kind != ForestKind::Regressor {
            return Err(Error::State("predict_regression on a classifier".into()));
        }
        self.mean_over_trees(x)
    }

    /// Mean over trees of the leaf's weighted feasible-class probability.
    pub fn predict_feasible_prob(&self, x: &[f64]) -> Result<f64> {
        if self.kind != ForestKind::Classifier {
            return Err(Error::State("predict_feasible_prob on a regressor".into()));
        }
        self.mean_over_trees(x).map(|p| p.clamp(0.0, 1.0))
    }

    /// Impurity-based importance normalized to sum to one. Forests that never
    /// split report the uniform vector.
    pub fn feature_importance(&self) -> Result<Vec<f64>> {
        if self.trees.is_empty() {
            return Err(Error::State("forest is not fit".into()));
        }
        let total: f64 = self.raw_importance.iter().sum();
        let d = self.n_features;
        if total <= 0.0 || !total.is_finite() {
            return Ok(vec![1.0 / d as f64; d]);
        }
        Ok(self.raw_importance.iter().map(|v| v / total).collect())
    }

    #[cfg(test)]
    pub(crate) fn from_trees(kind: ForestKind, n_features: usize, trees: Vec<Tree>) -> Self {
        Self {
            kind,
            n_features,
            trees,
            raw_importance: vec![0.0; n_features],
        }
    }
}
