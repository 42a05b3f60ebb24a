//! The active-learning loop: prior-guided warm-up, surrogate fitting,
//! front prediction behind the Pareto Wall, and batch selection.

use std::collections::HashSet;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluator::{evaluate_records, Evaluator};
use crate::forest::{fit_classifier, fit_regressor, Forest};
use crate::pareto::{
    constrained_front, hvi_at, pareto_front, reference_point, EvaluationRecord, Normalization, ParetoArchive,
    WARMUP_TAG,
};
use crate::priors::{sample_distinct, warmup_sample, SamplingMode};
use crate::rng::RngState;
use crate::scenario::Scenario;
use crate::space::{enumerate_space, Configuration, DesignSpace, DEFAULT_ENUMERATION_CAP};

const STREAM_WARMUP: u64 = 1;
const STREAM_POOL: u64 = 2;
const STREAM_SELECT: u64 = 3;
const STREAM_FIT: u64 = 4;

/// One regressor per objective plus the optional feasibility classifier, all
/// trained on the same records.
#[derive(Debug, Clone)]
pub struct SurrogateBundle {
    pub regressors: Vec<Forest>,
    pub classifier: Option<Forest>,
    pub threshold: f64,
}

impl SurrogateBundle {
    /// Fits every model on `records`. The fits run concurrently; each model
    /// draws from its own stream so the result does not depend on scheduling.
    pub fn fit(space: &DesignSpace, records: &[EvaluationRecord], scenario: &Scenario, rng: RngState) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Fit("no records to train on".into()));
        }
        let x: Vec<Vec<f64>> = records.iter().map(|r| space.encode(&r.config)).collect::<Result<_>>()?;
        let kinds = space.feature_kinds();
        let p = scenario.objective_count();
        let with_classifier = scenario.uses_classifier();
        let jobs = p + usize::from(with_classifier);
        let mut models = (0..jobs)
            .into_par_iter()
            .map(|k| {
                let stream = rng.child(STREAM_FIT, k as u64);
                if k < p {
                    let y: Vec<f64> = records.iter().map(|r| r.objectives[k]).collect();
                    fit_regressor(&x, &y, &kinds, &scenario.regressor, stream)
                } else {
                    let labels: Vec<bool> = records.iter().map(|r| r.feasible).collect();
                    fit_classifier(&x, &labels, &kinds, &scenario.classifier, stream)
                }
            })
            .collect::<Result<Vec<Forest>>>()?;
        let classifier = if with_classifier { models.pop() } else { None };
        Ok(Self {
            regressors: models,
            classifier,
            threshold: scenario.feasibility_threshold,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.regressors.iter().map(|m| m.predict_regression(x)).collect()
    }

    /// Without a classifier every point passes.
    pub fn predicted_feasible(&self, x: &[f64]) -> Result<bool> {
        match &self.classifier {
            Some(c) => Ok(c.predict_feasible_prob(x)? >= self.threshold),
            None => Ok(true),
        }
    }

    /// Importance matrix indexed `[objective][parameter]`.
    pub fn importances(&self) -> Result<Vec<Vec<f64>>> {
        self.regressors.iter().map(Forest::feature_importance).collect()
    }
}

/// Configurations the surrogates rank each iteration: the whole space when it
/// has at most `s` points, otherwise `s` distinct uniform draws.
pub fn candidate_pool<R: Rng + ?Sized>(space: &DesignSpace, s: usize, rng: &mut R) -> Result<Vec<Configuration>> {
    if s == 0 {
        return Err(Error::validation("pareto_prediction_samples", "must be at least 1"));
    }
    if let Some(card) = space.cardinality() {
        if card <= s as u128 {
            if let Ok(all) = enumerate_space(space, DEFAULT_ENUMERATION_CAP) {
                return Ok(all.collect());
            }
        }
    }
    Ok(sample_distinct(space, s, &HashSet::new(), SamplingMode::Uniform, rng))
}

/// Predicted feasible Pareto front of `pool` minus `exclude`, in pool order.
pub fn predict_pareto(
    bundle: &SurrogateBundle,
    space: &DesignSpace,
    pool: &[Configuration],
    exclude: &HashSet<Configuration>,
) -> Result<Vec<Configuration>> {
    if bundle.regressors.is_empty() {
        return Err(Error::State("surrogates are not fit".into()));
    }
    let scored: Vec<Option<Vec<f64>>> = pool
        .par_iter()
        .map(|c| {
            if exclude.contains(c) {
                return Ok(None);
            }
            let x = space.encode(c)?;
            if !bundle.predicted_feasible(&x)? {
                return Ok(None);
            }
            bundle.predict(&x).map(Some)
        })
        .collect::<Result<_>>()?;
    let survivors: Vec<usize> = (0..pool.len()).filter(|&i| scored[i].is_some()).collect();
    let predictions: Vec<&[f64]> = survivors.iter().map(|&i| scored[i].as_deref().unwrap()).collect();
    Ok(pareto_front(&predictions)
        .into_iter()
        .map(|k| pool[survivors[k]].clone())
        .collect())
}

/// At most `m` configurations to evaluate next. Surplus predictions are
/// subsampled uniformly; a shortfall is filled with prior samples that are
/// new to both the archive and the batch. The batch is short only when the
/// space has nothing left.
pub fn select_batch<R: Rng + ?Sized>(
    predicted: &[Configuration],
    m: usize,
    space: &DesignSpace,
    archive: &HashSet<Configuration>,
    rng: &mut R,
) -> Result<Vec<Configuration>> {
    if m == 0 {
        return Err(Error::validation(
            "evaluations_per_optimization_iteration",
            "must be at least 1",
        ));
    }
    let fresh: Vec<Configuration> = predicted.iter().filter(|c| !archive.contains(*c)).cloned().collect();
    if fresh.len() > m {
        let mut picks = index::sample(rng, fresh.len(), m).into_vec();
        picks.sort_unstable();
        return Ok(picks.into_iter().map(|i| fresh[i].clone()).collect());
    }
    let mut batch = fresh;
    if batch.len() < m {
        let mut exclude = archive.clone();
        exclude.extend(batch.iter().cloned());
        batch.extend(sample_distinct(
            space,
            m - batch.len(),
            &exclude,
            SamplingMode::Prior,
            rng,
        ));
    }
    Ok(batch)
}

/// Bookkeeping for one pass through the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationInfo {
    pub iteration: i64,
    /// Size of the predicted front the batch was drawn from.
    pub predicted: usize,
    pub evaluated: usize,
    pub fit_seconds: f64,
    pub evaluate_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub archive: ParetoArchive,
    /// Active-learning iterations completed.
    pub iterations: usize,
    pub history: Vec<IterationInfo>,
    /// Importance matrix `[objective][parameter]` of the final surrogates.
    pub importances: Vec<Vec<f64>>,
    pub warmup_seconds: f64,
    pub elapsed_seconds: f64,
}

/// A failed run keeps whatever was evaluated before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub archive: ParetoArchive,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({} records kept)", self.error, self.archive.len())
    }
}

impl std::error::Error for RunFailure {}

/// Runs the full exploration for `scenario`.
pub fn run(scenario: &Scenario, evaluator: &dyn Evaluator) -> std::result::Result<RunOutcome, Box<RunFailure>> {
    let started = Instant::now();
    let mut archive = ParetoArchive::new();
    match run_into(scenario, evaluator, &mut archive) {
        Ok(r) => Ok(RunOutcome {
            archive,
            iterations: r.iterations,
            history: r.history,
            importances: r.importances,
            warmup_seconds: r.warmup_seconds,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        }),
        Err(error) => Err(Box::new(RunFailure { error, archive })),
    }
}

struct LoopResult {
    iterations: usize,
    history: Vec<IterationInfo>,
    importances: Vec<Vec<f64>>,
    warmup_seconds: f64,
}

fn run_into(scenario: &Scenario, evaluator: &dyn Evaluator, archive: &mut ParetoArchive) -> Result<LoopResult> {
    let space = &scenario.space;
    let p = scenario.objective_count();
    let root = RngState::new(scenario.seed, 0);
    let mut history = Vec::new();

    let t = Instant::now();
    let warmup = warmup_sample(space, scenario.doe_samples, &mut root.child(STREAM_WARMUP, 0).rng());
    archive.extend(evaluate_records(evaluator, space, &warmup, p, WARMUP_TAG)?)?;
    let warmup_seconds = t.elapsed().as_secs_f64();

    let mut i = 0usize;
    loop {
        let t = Instant::now();
        let bundle = SurrogateBundle::fit(space, archive.records(), scenario, root.child(STREAM_FIT, i as u64))?;
        let fit_seconds = t.elapsed().as_secs_f64();
        let pool = candidate_pool(
            space,
            scenario.pareto_prediction_samples,
            &mut root.child(STREAM_POOL, i as u64).rng(),
        )?;
        let predicted = predict_pareto(&bundle, space, &pool, archive.configurations())?;
        let batch = if predicted.is_empty() || i >= scenario.optimization_iterations {
            Vec::new()
        } else {
            select_batch(
                &predicted,
                scenario.evaluations_per_iteration,
                space,
                archive.configurations(),
                &mut root.child(STREAM_SELECT, i as u64).rng(),
            )?
        };
        if batch.is_empty() {
            return Ok(LoopResult {
                iterations: i,
                history,
                importances: bundle.importances()?,
                warmup_seconds,
            });
        }
        let t = Instant::now();
        archive.extend(evaluate_records(evaluator, space, &batch, p, i as i64)?)?;
        history.push(IterationInfo {
            iteration: i as i64,
            predicted: predicted.len(),
            evaluated: batch.len(),
            fit_seconds,
            evaluate_seconds: t.elapsed().as_secs_f64(),
        });
        i += 1;
    }
}

/// HVI of the archive's front after each iteration tag, against a fixed
/// reference front. One reference point, taken over the reference and every
/// intermediate front, is shared by all entries so the trace is comparable
/// across iterations and never increases.
pub fn hvi_trace<V: AsRef<[f64]>>(
    records: &[EvaluationRecord],
    reference: &[V],
    norm: &Normalization,
) -> Result<Vec<(i64, f64)>> {
    if reference.is_empty() {
        return Err(Error::State(
            "hypervolume indicator needs a non-empty reference front".into(),
        ));
    }
    let mut tags: Vec<i64> = records.iter().map(|r| r.iteration).collect();
    tags.sort_unstable();
    tags.dedup();
    let fronts: Vec<Vec<Vec<f64>>> = tags
        .iter()
        .map(|&t| {
            let upto: Vec<EvaluationRecord> = records.iter().filter(|r| r.iteration <= t).cloned().collect();
            constrained_front(&upto)
                .into_iter()
                .map(|i| upto[i].objectives.clone())
                .collect()
        })
        .collect();
    let reference: Vec<&[f64]> = reference.iter().map(|v| v.as_ref()).collect();
    let mut all: Vec<&[f64]> = reference.clone();
    for f in &fronts {
        all.extend(f.iter().map(Vec::as_slice));
    }
    let ref_point = reference_point(&[&all], norm)?;
    tags.iter()
        .zip(&fronts)
        .map(|(&t, f)| Ok((t, hvi_at(f, &reference, norm, ref_point)?)))
        .collect()
}

/// Outcome of a single-objective search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonoBest<'a> {
    Best(&'a EvaluationRecord),
    NoFeasible,
}

/// The feasible record with the smallest objective; earliest wins ties.
pub fn mono_objective_best(records: &[EvaluationRecord]) -> Result<MonoBest<'_>> {
    let mut best: Option<&EvaluationRecord> = None;
    for r in records {
        if r.objectives.len() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: r.objectives.len(),
            });
        }
        if r.feasible && best.is_none_or(|b| r.objectives[0] < b.objectives[0]) {
            best = Some(r);
        }
    }
    Ok(best.map_or(MonoBest::NoFeasible, MonoBest::Best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{toy_fpga_space, FixedEvaluator, Outcome};
    use crate::forest::{ForestKind, SplitTest, Tree, TreeNode};
    use crate::space::{Parameter, Value};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A tree answering `values[x]` for x in 0..values.len().
    fn lookup(values: &[f64]) -> Tree {
        let mut nodes = Vec::new();
        for (i, v) in values.iter().enumerate() {
            if i + 1 == values.len() {
                nodes.push(TreeNode::Leaf(*v));
            } else {
                let at = nodes.len();
                nodes.push(TreeNode::Split {
                    feature: 0,
                    test: SplitTest::LessEq(i as f64 + 0.5),
                    left: at + 1,
                    right: at + 2,
                });
                nodes.push(TreeNode::Leaf(*v));
            }
        }
        Tree { nodes }
    }

    fn line_space(n: i64) -> DesignSpace {
        DesignSpace::new(vec![Parameter::integer("x", 0, n - 1).unwrap()]).unwrap()
    }

    fn configs(xs: &[i64]) -> Vec<Configuration> {
        xs.iter()
            .map(|&x| Configuration::new(vec![Value::Integer(x)]))
            .collect()
    }

    fn bundle(obj1: &[f64], obj2: &[f64], feasible: Option<&[f64]>) -> SurrogateBundle {
        SurrogateBundle {
            regressors: vec![
                Forest::from_trees(ForestKind::Regressor, 1, vec![lookup(obj1)]),
                Forest::from_trees(ForestKind::Regressor, 1, vec![lookup(obj2)]),
            ],
            classifier: feasible.map(|p| Forest::from_trees(ForestKind::Classifier, 1, vec![lookup(p)])),
            threshold: 0.5,
        }
    }

    #[test]
    fn pool_enumerates_small_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = toy_fpga_space();
        assert_eq!(candidate_pool(&space, 100_000, &mut rng).unwrap().len(), 240);
        assert_eq!(candidate_pool(&space, 1, &mut rng).unwrap().len(), 1);
        let big = DesignSpace::new(vec![Parameter::integer("a", 0, 999_999_999).unwrap()]).unwrap();
        let pool = candidate_pool(&big, 1000, &mut rng).unwrap();
        assert_eq!(pool.iter().collect::<HashSet<_>>().len(), 1000);
        assert!(candidate_pool(&space, 0, &mut rng).is_err());
    }

    #[test]
    fn predicted_front_of_hand_set_surrogates() {
        let space = line_space(4);
        let pool = configs(&[0, 1, 2, 3]);
        let b = bundle(&[1.0, 2.0, 3.0, 2.0], &[3.0, 2.0, 1.0, 3.0], None);
        let front = predict_pareto(&b, &space, &pool, &HashSet::new()).unwrap();
        assert_eq!(front, configs(&[0, 1, 2]));

        let wall: HashSet<_> = configs(&[1]).into_iter().collect();
        let front = predict_pareto(&b, &space, &pool, &wall).unwrap();
        assert_eq!(front, configs(&[0, 2]));

        let all: HashSet<_> = pool.iter().cloned().collect();
        assert!(predict_pareto(&b, &space, &pool, &all).unwrap().is_empty());
    }

    #[test]
    fn classifier_filters_before_the_front() {
        let space = line_space(4);
        let pool = configs(&[0, 1, 2, 3]);
        let none = bundle(
            &[1.0, 2.0, 3.0, 2.0],
            &[3.0, 2.0, 1.0, 3.0],
            Some(&[0.1, 0.2, 0.3, 0.4]),
        );
        assert!(predict_pareto(&none, &space, &pool, &HashSet::new())
            .unwrap()
            .is_empty());
        let some = bundle(
            &[1.0, 2.0, 3.0, 2.0],
            &[3.0, 2.0, 1.0, 3.0],
            Some(&[0.1, 0.9, 0.5, 0.6]),
        );
        let front = predict_pareto(&some, &space, &pool, &HashSet::new()).unwrap();
        assert_eq!(front, configs(&[1, 2]));
        let unfit = SurrogateBundle {
            regressors: Vec::new(),
            classifier: None,
            threshold: 0.5,
        };
        assert!(matches!(
            predict_pareto(&unfit, &space, &pool, &HashSet::new()),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn batch_selection_branches() {
        let space = line_space(100);
        let archive: HashSet<_> = configs(&[50, 51, 52]).into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);

        let five = configs(&[1, 2, 3, 4, 5]);
        assert_eq!(select_batch(&five, 5, &space, &archive, &mut rng).unwrap(), five);

        let fill = select_batch(&[], 3, &space, &archive, &mut rng).unwrap();
        assert_eq!(fill.len(), 3);
        assert!(fill.iter().all(|c| !archive.contains(c)));
        assert_eq!(fill.iter().collect::<HashSet<_>>().len(), 3);

        let ten = configs(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
        let pick = |seed| select_batch(&ten, 4, &space, &archive, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let a = pick(11);
        assert_eq!(a.len(), 4);
        assert_eq!(a, pick(11));
        assert!(a.iter().all(|c| ten.contains(c)));

        let two = configs(&[7, 8]);
        let short = select_batch(&two, 6, &space, &archive, &mut rng).unwrap();
        assert_eq!(&short[..2], &two[..]);
        assert_eq!(short.iter().collect::<HashSet<_>>().len(), 6);
        assert!(short.iter().all(|c| !archive.contains(c)));
    }

    #[test]
    fn exhausted_space_gives_a_short_batch() {
        let space = line_space(4);
        let archive: HashSet<_> = configs(&[0, 1, 3]).into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_batch(&[], 5, &space, &archive, &mut rng).unwrap(), configs(&[2]));
        let full: HashSet<_> = configs(&[0, 1, 2, 3]).into_iter().collect();
        assert!(select_batch(&[], 5, &space, &full, &mut rng).unwrap().is_empty());
    }

    fn rec(v: f64, feasible: bool, iteration: i64) -> EvaluationRecord {
        EvaluationRecord {
            config: Configuration::new(vec![Value::Integer(v as i64)]),
            objectives: vec![v],
            feasible,
            iteration,
        }
    }

    #[test]
    fn mono_objective_minimum() {
        let recs = vec![
            rec(5.0, true, -1),
            rec(3.0, true, -1),
            rec(9.0, true, 0),
            rec(1.0, false, 0),
        ];
        assert_eq!(mono_objective_best(&recs).unwrap(), MonoBest::Best(&recs[1]));
        let tie = vec![rec(3.0, true, -1), rec(3.0, true, 0)];
        match mono_objective_best(&tie).unwrap() {
            MonoBest::Best(r) => assert_eq!(r.iteration, -1),
            other => panic!("{other:?}"),
        }
        let none = vec![rec(1.0, false, -1)];
        assert_eq!(mono_objective_best(&none).unwrap(), MonoBest::NoFeasible);
    }

    #[test]
    fn trace_over_iterations_never_increases() {
        let two = |a: f64, b: f64, f: bool, it: i64| EvaluationRecord {
            config: Configuration::new(vec![Value::Integer((a * 10.0 + b) as i64)]),
            objectives: vec![a, b],
            feasible: f,
            iteration: it,
        };
        let recs = vec![
            two(5.0, 5.0, true, -1),
            two(0.0, 9.0, true, 0),
            two(3.0, 3.0, true, 1),
            two(0.0, 0.0, false, 1),
            two(1.0, 1.0, true, 2),
        ];
        let reference = vec![vec![1.0, 1.0]];
        let t = hvi_trace(&recs, &reference, &Normalization::identity(2)).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(t[3].1, 0.0);
    }

    #[test]
    fn fixed_evaluator_run_respects_budget() {
        let text = r#"{
            "optimization_objectives": ["a", "b"],
            "input_parameters": {"x": {"parameter_type": "integer", "values": [0, 49]}},
            "design_of_experiment": {"number_of_samples": 5},
            "optimization_iterations": 3,
            "evaluations_per_optimization_iteration": 4,
            "evaluator": {"builtin": "toy_fpga"}
        }"#;
        let s = crate::scenario::parse_scenario(text).unwrap();
        let e = FixedEvaluator(Outcome {
            objectives: vec![1.0, 2.0],
            feasible: true,
        });
        let out = run(&s, &e).unwrap();
        assert!(out.archive.len() <= 5 + 3 * 4);
        assert_eq!(
            out.archive
                .records()
                .iter()
                .filter(|r| r.iteration == WARMUP_TAG)
                .count(),
            5
        );
    }
}
