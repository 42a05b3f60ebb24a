//! Dominance, constrained Pareto fronts and the hypervolume indicator.
//!
//! Every objective is minimized.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::space::Configuration;

/// Iteration tag of warm-up records.
pub const WARMUP_TAG: i64 = -1;

/// `a ≺ b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Indices (ascending) of the points no other point dominates. Equal vectors
/// are all kept.
///
/// Points are visited in lexicographic order; a point can only be dominated
/// by one that sorts before it, and if any earlier point dominates it then
/// some earlier front member does.
pub fn pareto_front<V: AsRef<[f64]>>(points: &[V]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex_cmp(points[i].as_ref(), points[j].as_ref()).then(i.cmp(&j)));
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let p = points[i].as_ref();
        if !front.iter().any(|&j| dominates_unchecked(points[j].as_ref(), p)) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Pareto front restricted to feasible points; indices refer to `points`.
pub fn constrained_front_indices<V: AsRef<[f64]>>(points: &[V], feasible: &[bool]) -> Vec<usize> {
    let keep: Vec<usize> = (0..points.len()).filter(|&i| feasible[i]).collect();
    let sub: Vec<&[f64]> = keep.iter().map(|&i| points[i].as_ref()).collect();
    pareto_front(&sub).into_iter().map(|k| keep[k]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub config: Configuration,
    pub objectives: Vec<f64>,
    pub feasible: bool,
    /// [`WARMUP_TAG`] for warm-up, else the active-learning iteration.
    pub iteration: i64,
}

/// Indices of the constrained front of `records`.
pub fn constrained_front(records: &[EvaluationRecord]) -> Vec<usize> {
    let objs: Vec<&[f64]> = records.iter().map(|r| r.objectives.as_slice()).collect();
    let feasible: Vec<bool> = records.iter().map(|r| r.feasible).collect();
    constrained_front_indices(&objs, &feasible)
}

/// All evaluated records with the current constrained front.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    records: Vec<EvaluationRecord>,
    front: Vec<usize>,
    configs: HashSet<Configuration>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds records whose configurations are new; returns an error naming the
    /// first duplicate.
    pub fn extend(&mut self, records: impl IntoIterator<Item = EvaluationRecord>) -> Result<()> {
        for r in records {
            if !self.configs.insert(r.config.clone()) {
                return Err(Error::State(format!(
                    "configuration {:?} evaluated twice",
                    r.config.values()
                )));
            }
            self.records.push(r);
        }
        self.front = constrained_front(&self.records);
        Ok(())
    }

    pub fn records(&self) -> &[EvaluationRecord] {
        &self.records
    }

    pub fn front_indices(&self) -> &[usize] {
        &self.front
    }

    pub fn front(&self) -> Vec<&EvaluationRecord> {
        self.front.iter().map(|&i| &self.records[i]).collect()
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.configs.contains(config)
    }

    pub fn configurations(&self) -> &HashSet<Configuration> {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Constrained front of the union of several runs: the best available
/// approximation of the true front.
pub fn reference_front(runs: &[&[EvaluationRecord]]) -> Vec<EvaluationRecord> {
    let all: Vec<EvaluationRecord> = runs.iter().flat_map(|r| r.iter().cloned()).collect();
    constrained_front(&all).into_iter().map(|i| all[i].clone()).collect()
}

/// Exact area dominated by a two-objective front inside the box bounded by
/// `reference`. Points not component-wise `<=` the reference are ignored.
pub fn hypervolume_2d<V: AsRef<[f64]>>(front: &[V], reference: [f64; 2]) -> Result<f64> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(front.len());
    for p in front {
        let p = p.as_ref();
        if p.len() != 2 {
            return Err(Error::Unsupported(format!(
                "hypervolume needs two objectives, got {}",
                p.len()
            )));
        }
        if p[0] <= reference[0] && p[1] <= reference[1] {
            pts.push([p[0], p[1]]);
        }
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for [x, y] in pts {
        if y < ceiling {
            area += (reference[0] - x) * (ceiling - y);
            ceiling = y;
        }
    }
    Ok(area)
}

/// Per-objective scale factors for the hypervolume indicator: each objective
/// is divided by its population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub sigma: Vec<f64>,
    /// Objectives whose deviation was zero and are left unscaled.
    pub degenerate: Vec<usize>,
}

impl Normalization {
    pub fn identity(p: usize) -> Self {
        Self {
            sigma: vec![1.0; p],
            degenerate: Vec::new(),
        }
    }

    pub fn from_points<V: AsRef<[f64]>>(points: &[V]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::State("normalization needs at least one point".into()))?;
        let p = first.as_ref().len();
        let n = points.len() as f64;
        let mut sigma = Vec::with_capacity(p);
        let mut degenerate = Vec::new();
        for j in 0..p {
            let mean = points.iter().map(|v| v.as_ref()[j]).sum::<f64>() / n;
            let var = points.iter().map(|v| (v.as_ref()[j] - mean).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            if s > 0.0 && s.is_finite() {
                sigma.push(s);
            } else {
                sigma.push(1.0);
                degenerate.push(j);
            }
        }
        Ok(Self { sigma, degenerate })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.sigma).map(|(x, s)| x / s).collect()
    }
}

const REF_MARGIN: f64 = 1e-6;

/// Component-wise maximum over the normalized fronts plus a small margin.
pub fn reference_point<V: AsRef<[f64]>>(fronts: &[&[V]], norm: &Normalization) -> Result<[f64; 2]> {
    let mut max = [f64::NEG_INFINITY; 2];
    for front in fronts {
        for v in front.iter() {
            let s = norm.apply(v.as_ref());
            if s.len() != 2 {
                return Err(Error::Unsupported(format!(
                    "hypervolume needs two objectives, got {}",
                    s.len()
                )));
            }
            max[0] = max[0].max(s[0]);
            max[1] = max[1].max(s[1]);
        }
    }
    if !max.iter().all(|m| m.is_finite()) {
        return Err(Error::State("reference point of empty fronts".into()));
    }
    Ok([max[0] + REF_MARGIN, max[1] + REF_MARGIN])
}

/// `HV(reference) - HV(approx)` after normalization, with an explicit
/// reference point, floored at zero.
pub fn hvi_at<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    approx: &[A],
    reference: &[B],
    norm: &Normalization,
    ref_point: [f64; 2],
) -> Result<f64> {
    let a: Vec<Vec<f64>> = approx.iter().map(|v| norm.apply(v.as_ref())).collect();
    let r: Vec<Vec<f64>> = reference.iter().map(|v| norm.apply(v.as_ref())).collect();
    let gap = hypervolume_2d(&r, ref_point)? - hypervolume_2d(&a, ref_point)?;
    Ok(gap.max(0.0))
}

/// Hypervolume indicator of `approx` against `reference`; the reference
/// point is the normalized component-wise maximum over both fronts.
pub fn hvi<A: AsRef<[f64]>, B: AsRef<[f64]>>(approx: &[A], reference: &[B], norm: &Normalization) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::State(
            "hypervolume indicator needs a non-empty reference front".into(),
        ));
    }
    let a: Vec<&[f64]> = approx.iter().map(|v| v.as_ref()).collect();
    let r: Vec<&[f64]> = reference.iter().map(|v| v.as_ref()).collect();
    let ref_point = reference_point(&[&a, &r], norm)?;
    hvi_at(approx, reference, norm, ref_point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use crate::space::Value;
    use proptest::prelude::*;
    use rand::Rng;

    fn brute_front(points: &[Vec<f64>]) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| !(0..points.len()).any(|j| dominates_unchecked(&points[j], &points[i])))
            .collect()
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[2.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(dominates(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn front_examples() {
        let pts = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![2.0, 3.0]];
        assert_eq!(pareto_front(&pts), vec![0, 1, 2]);
        assert!(pareto_front::<Vec<f64>>(&[]).is_empty());
        let dup = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_front(&dup), vec![0, 1]);
    }

    #[test]
    fn front_matches_brute_force_on_random_sets() {
        let mut rng = RngState::new(77, 0).rng();
        let pts: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.random(), rng.random()]).collect();
        assert_eq!(pareto_front(&pts), brute_front(&pts));
    }

    fn record(obj: [f64; 2], feasible: bool, id: i64) -> EvaluationRecord {
        EvaluationRecord {
            config: Configuration::new(vec![Value::Integer(id)]),
            objectives: obj.to_vec(),
            feasible,
            iteration: WARMUP_TAG,
        }
    }

    #[test]
    fn constrained_front_skips_infeasible() {
        let all_bad = vec![record([1.0, 1.0], false, 0), record([2.0, 0.0], false, 1)];
        assert!(constrained_front(&all_bad).is_empty());
        let one = vec![record([5.0, 5.0], true, 0), record([1.0, 1.0], false, 1)];
        assert_eq!(constrained_front(&one), vec![0]);
    }

    #[test]
    fn archive_rejects_duplicates() {
        let mut a = ParetoArchive::new();
        a.extend([record([1.0, 2.0], true, 0), record([2.0, 1.0], true, 1)])
            .unwrap();
        assert_eq!(a.front_indices(), &[0, 1]);
        assert!(a.extend([record([0.0, 0.0], true, 0)]).is_err());
    }

    #[test]
    fn reference_front_of_union() {
        let a = vec![record([1.0, 4.0], true, 0), record([3.0, 3.0], true, 1)];
        let b = vec![record([4.0, 1.0], true, 2), record([2.0, 2.0], true, 3)];
        let front = reference_front(&[&a, &b]);
        let objs: Vec<_> = front.iter().map(|r| r.objectives.clone()).collect();
        assert_eq!(objs, vec![vec![1.0, 4.0], vec![4.0, 1.0], vec![2.0, 2.0]]);
        assert_eq!(reference_front(&[&a]).len(), 2);
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume_2d(&[[0.0, 0.0]], [2.0, 2.0]).unwrap(), 4.0);
        assert_eq!(hypervolume_2d(&[[1.0, 1.0]], [2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(hypervolume_2d(&[[0.0, 1.0], [1.0, 0.0]], [2.0, 2.0]).unwrap(), 3.0);
        assert_eq!(hypervolume_2d(&[[3.0, 0.0]], [2.0, 2.0]).unwrap(), 0.0);
        assert!(hypervolume_2d(&[vec![0.0, 0.0, 0.0]], [1.0, 1.0]).is_err());
    }

    #[test]
    fn hvi_basics() {
        let reference = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let norm = Normalization::identity(2);
        assert_eq!(hvi(&reference, &reference, &norm).unwrap(), 0.0);
        let worse = vec![vec![0.5, 1.5], vec![1.5, 0.5]];
        assert!(hvi(&worse, &reference, &norm).unwrap() > 0.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(hvi(&reference, &empty, &norm).is_err());
    }

    #[test]
    fn normalization_uses_population_deviation() {
        let n = Normalization::from_points(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(n.sigma, vec![1.0, 1.0]);
        assert_eq!(n.degenerate, vec![1]);
        let n = Normalization::from_points(&[vec![0.0], vec![4.0]]).unwrap();
        assert_eq!(n.sigma, vec![2.0]);
    }

    fn arb_front() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec((0.0f64..10.0, 0.0f64..10.0).prop_map(|(a, b)| vec![a, b]), 1..40)
    }

    proptest! {
        #[test]
        fn dominance_is_a_strict_partial_order(
            a in prop::collection::vec(0i32..4, 3),
            b in prop::collection::vec(0i32..4, 3),
            c in prop::collection::vec(0i32..4, 3),
        ) {
            let f = |v: &Vec<i32>| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
            let (a, b, c) = (f(&a), f(&b), f(&c));
            prop_assert!(!dominates_unchecked(&a, &a));
            prop_assert!(!(dominates_unchecked(&a, &b) && dominates_unchecked(&b, &a)));
            if dominates_unchecked(&a, &b) && dominates_unchecked(&b, &c) {
                prop_assert!(dominates_unchecked(&a, &c));
            }
        }

        #[test]
        fn front_equals_oracle(pts in prop::collection::vec(prop::collection::vec(0i32..6, 3), 0..80)) {
            let pts: Vec<Vec<f64>> = pts.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
            prop_assert_eq!(pareto_front(&pts), brute_front(&pts));
        }

        #[test]
        fn hypervolume_monotone(front in arb_front(), extra in (0.0f64..10.0, 0.0f64..10.0)) {
            let r = [10.0, 10.0];
            let before = hypervolume_2d(&front, r).unwrap();
            let mut grown = front.clone();
            grown.push(vec![extra.0, extra.1]);
            prop_assert!(hypervolume_2d(&grown, r).unwrap() >= before);
        }

        #[test]
        fn hvi_self_zero_and_permutation_invariant(front in arb_front(), other in arb_front(), seed in any::<u64>()) {
            let norm = Normalization::from_points(&front).unwrap();
            prop_assert_eq!(hvi(&front, &front, &norm).unwrap(), 0.0);
            let mut shuffled = other.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut RngState::new(seed, 0).rng());
            prop_assert_eq!(hvi(&other, &front, &norm).unwrap(), hvi(&shuffled, &front, &norm).unwrap());
        }
    }
}
