//! Single randomized CART tree over weighted samples.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::space::FeatureKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitTest {
    /// Go left when `x <= t`.
    LessEq(f64),
    /// Go left when `x == level`.
    Equals(f64),
}

impl SplitTest {
    #[inline]
    fn goes_left(self, x: f64) -> bool {
        match self {
            SplitTest::LessEq(t) => x <= t,
            SplitTest::Equals(level) => x == level,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        test: SplitTest,
        left: usize,
        right: usize,
    },
    /// Regression: mean target. Classification: weighted probability of the
    /// positive (feasible) class.
    Leaf(f64),
}

/// Flat arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    idx = if test.goes_left(x[*feature]) { *left } else { *right };
                }
            }
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Variance,
    /// Binary Gini; targets are 1.0 (positive) or 0.0.
    Gini,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub row: usize,
    pub weight: f64,
    pub target: f64,
}

pub(crate) struct TreeParams<'a> {
    pub criterion: Criterion,
    pub kinds: &'a [FeatureKind],
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

/// Weighted sufficient statistics. For variance, targets are centered on the
/// node mean before accumulation.
#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    w: f64,
    s: f64,
    q: f64,
}

impl Stats {
    #[inline]
    fn add(&mut self, w: f64, y: f64) {
        self.w += w;
        self.s += w * y;
        self.q += w * y * y;
    }

    #[inline]
    fn minus(self, other: Stats) -> Stats {
        Stats {
            w: self.w - other.w,
            s: self.s - other.s,
            q: self.q - other.q,
        }
    }

    /// Impurity times weight.
    #[inline]
    fn total_impurity(self, criterion: Criterion) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        match criterion {
            Criterion::Variance => (self.q - self.s * self.s / self.w).max(0.0),
            Criterion::Gini => {
                let p = (self.s / self.w).clamp(0.0, 1.0);
                2.0 * self.w * p * (1.0 - p)
            }
        }
    }
}

struct BestSplit {
    feature: usize,
    test: SplitTest,
    key: f64,
    gain: f64,
}

const MIN_RELATIVE_GAIN: f64 = 1e-10;

pub(crate) struct TreeBuilder<'a, R: Rng> {
    x: &'a [Vec<f64>],
    params: TreeParams<'a>,
    rng: R,
    nodes: Vec<TreeNode>,
    importance: Vec<f64>,
    root_weight: f64,
}

impl<'a, R: Rng> TreeBuilder<'a, R> {
    pub fn new(x: &'a [Vec<f64>], params: TreeParams<'a>, rng: R) -> Self {
        let d = params.kinds.len();
        Self {
            x,
            params,
            rng,
            nodes: Vec::new(),
            importance: vec![0.0; d],
            root_weight: 0.0,
        }
    }

    /// Grows the tree; returns it with its raw (unnormalized) per-feature
    /// impurity decrease, each split weighted by its node's weight fraction.
    pub fn build(mut self, mut samples: Vec<Sample>) -> (Tree, Vec<f64>) {
        self.root_weight = samples.iter().map(|s| s.weight).sum();
        // (node slot, range in `samples`, depth)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        self.nodes.push(TreeNode::Leaf(0.0));
        while let Some((slot, lo, hi, depth)) = stack.pop() {
            let node_samples = &mut samples[lo..hi];
            match self.split_node(node_samples, depth) {
                Some((feature, test, n_left)) => {
                    let left = self.nodes.len();
                    let right = left + 1;
                    self.nodes.push(TreeNode::Leaf(0.0));
                    self.nodes.push(TreeNode::Leaf(0.0));
                    self.nodes[slot] = TreeNode::Split {
                        feature,
                        test,
                        left,
                        right,
                    };
                    stack.push((right, lo + n_left, hi, depth + 1));
                    stack.push((left, lo, lo + n_left, depth + 1));
                }
                None => {
                    let (w, s) = node_samples
                        .iter()
                        .fold((0.0, 0.0), |(w, s), smp| (w + smp.weight, s + smp.weight * smp.target));
                    self.nodes[slot] = TreeNode::Leaf(if w > 0.0 { s / w } else { 0.0 });
                }
            }
        }
        (Tree { nodes: self.nodes }, self.importance)
    }

    /// Chooses and applies a split, partitioning `samples` so the left child
    /// comes first. Returns `None` for a leaf.
    fn split_node(&mut self, samples: &mut [Sample], depth: usize) -> Option<(usize, SplitTest, usize)> {
        if samples.len() < self.params.min_samples_split.max(2) {
            return None;
        }
        if self.params.max_depth.is_some_and(|m| depth >= m) {
            return None;
        }
        let criterion = self.params.criterion;
        let w_total: f64 = samples.iter().map(|s| s.weight).sum();
        let mean = samples.iter().map(|s| s.weight * s.target).sum::<f64>() / w_total;
        let center = match criterion {
            Criterion::Variance => mean,
            Criterion::Gini => 0.0,
        };
        let mut parent = Stats::default();
        for s in samples.iter() {
            parent.add(s.weight, s.target - center);
        }
        let parent_impurity = parent.total_impurity(criterion);
        if parent_impurity <= 0.0 || !parent_impurity.is_finite() {
            return None;
        }
        let min_gain = parent_impurity * MIN_RELATIVE_GAIN;

        let d = self.params.kinds.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut self.rng);

        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut scratch: Vec<(f64, f64, f64)> = Vec::with_capacity(samples.len());
        for &feature in &order {
            if visited >= self.params.max_features {
                break;
            }
            scratch.clear();
            scratch.extend(
                samples
                    .iter()
                    .map(|s| (self.x[s.row][feature], s.weight, s.target - center)),
            );
            let first = scratch[0].0;
            if scratch.iter().all(|(v, _, _)| *v == first) {
                continue;
            }
            visited += 1;
            let candidate = match self.params.kinds[feature] {
                FeatureKind::Ordered => best_threshold(&mut scratch, parent, criterion),
                FeatureKind::Unordered => best_level(&mut scratch, parent, criterion),
            };
            if let Some((test, key, score)) = candidate {
                let gain = parent_impurity - score;
                if gain <= min_gain {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => match gain.partial_cmp(&b.gain) {
                        Some(Ordering::Greater) => true,
                        Some(Ordering::Equal) => (feature, key) < (b.feature, b.key),
                        _ => false,
                    },
                };
                if better {
                    best = Some(BestSplit {
                        feature,
                        test,
                        key,
                        gain,
                    });
                }
            }
        }

        let best = best?;
        self.importance[best.feature] += best.gain / self.root_weight;
        let x = self.x;
        let n_left = partition(samples, |s| best.test.goes_left(x[s.row][best.feature]));
        Some((best.feature, best.test, n_left))
    }
}

/// Lowest weighted child impurity over midpoints of consecutive distinct
/// values. Returns `(test, threshold, child impurity * weight)`.
fn best_threshold(
    values: &mut [(f64, f64, f64)],
    parent: Stats,
    criterion: Criterion,
) -> Option<(SplitTest, f64, f64)> {
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut left = Stats::default();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..values.len() - 1 {
        let (v, w, y) = values[i];
        left.add(w, y);
        let next = values[i + 1].0;
        if next == v {
            continue;
        }
        let right = parent.minus(left);
        let score = left.total_impurity(criterion) + right.total_impurity(criterion);
        if best.is_none_or(|(_, s)| score < s) {
            let mut t = v + (next - v) / 2.0;
            if t >= next {
                t = v;
            }
            best = Some((t, score));
        }
    }
    best.map(|(t, score)| (SplitTest::LessEq(t), t, score))
}

/// One-vs-rest level tests for an unordered feature.
fn best_level(values: &mut [(f64, f64, f64)], parent: Stats, criterion: Criterion) -> Option<(SplitTest, f64, f64)> {
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < values.len() {
        let level = values[i].0;
        let mut group = Stats::default();
        while i < values.len() && values[i].0 == level {
            group.add(values[i].1, values[i].2);
            i += 1;
        }
        let rest = parent.minus(group);
        if rest.w <= 0.0 {
            continue;
        }
        let score = group.total_impurity(criterion) + rest.total_impurity(criterion);
        if best.is_none_or(|(_, s)| score < s) {
            best = Some((level, score));
        }
    }
    best.map(|(level, score)| (SplitTest::Equals(level), level, score))
}

/// Stable-enough in-place partition; returns the size of the left block.
fn partition<F: Fn(&Sample) -> bool>(samples: &mut [Sample], goes_left: F) -> usize {
    let mut n_left = 0;
    for i in 0..samples.len() {
        if goes_left(&samples[i]) {
            samples.swap(i, n_left);
            n_left += 1;
        }
    }
    n_left
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn build(x: &[Vec<f64>], y: &[f64], kinds: &[FeatureKind], criterion: Criterion) -> (Tree, Vec<f64>) {
        let samples = y
            .iter()
            .enumerate()
            .map(|(row, &target)| Sample {
                row,
                weight: 1.0,
                target,
            })
            .collect();
        let params = TreeParams {
            criterion,
            kinds,
            max_features: kinds.len(),
            max_depth: None,
            min_samples_split: 2,
        };
        TreeBuilder::new(x, params, RngState::new(0, 0).rng()).build(samples)
    }

    #[test]
    fn gini_threshold_lies_between_points() {
        let x = vec![vec![1.0], vec![4.0]];
        let (tree, _) = build(&x, &[1.0, 0.0], &[FeatureKind::Ordered], Criterion::Gini);
        match &tree.nodes[0] {
            TreeNode::Split {
                test: SplitTest::LessEq(t),
                ..
            } => assert!(*t > 1.0 && *t < 4.0, "threshold {t}"),
            other => panic!("expected a threshold split, got {other:?}"),
        }
        assert_eq!(tree.predict(&[1.0]), 1.0);
        assert_eq!(tree.predict(&[4.0]), 0.0);
    }

    #[test]
    fn unordered_feature_uses_equality() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![1.0]];
        let (tree, _) = build(
            &x,
            &[0.0, 5.0, 0.0, 5.0],
            &[FeatureKind::Unordered],
            Criterion::Variance,
        );
        assert!(matches!(
            tree.nodes[0],
            TreeNode::Split {
                test: SplitTest::Equals(l),
                ..
            } if l == 1.0
        ));
        for (row, y) in x.iter().zip([0.0, 5.0, 0.0, 5.0]) {
            assert_eq!(tree.predict(row), y);
        }
    }

    #[test]
    fn pure_node_is_a_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let (tree, imp) = build(&x, &[7.0; 3], &[FeatureKind::Ordered], Criterion::Variance);
        assert_eq!(tree.nodes, vec![TreeNode::Leaf(7.0)]);
        assert_eq!(imp, vec![0.0]);
    }

    #[test]
    fn equal_gain_prefers_lower_feature() {
        // Both features separate the targets identically.
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let (tree, _) = build(
            &x,
            &[0.0, 1.0],
            &[FeatureKind::Ordered, FeatureKind::Ordered],
            Criterion::Variance,
        );
        assert!(matches!(tree.nodes[0], TreeNode::Split { feature: 0, .. }));
    }
}
