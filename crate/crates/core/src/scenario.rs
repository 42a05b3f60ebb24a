//! Scenario files: JSON setup for a run.

use std::collections::HashSet;
use std::path::PathBuf;

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Result};
use crate::evaluator::BUILTIN_EVALUATORS;
use crate::forest::{ClassWeight, ForestHyperparams, MaxFeatures};
use crate::space::{DesignSpace, Domain, Parameter, Prior};

pub const DEFAULT_DOE_SAMPLES: usize = 1000;
pub const DEFAULT_OPTIMIZATION_ITERATIONS: usize = 50;
pub const DEFAULT_EVALUATIONS_PER_ITERATION: usize = 100;
pub const DEFAULT_PARETO_PREDICTION_SAMPLES: usize = 100_000;
pub const DEFAULT_TIMEOUT_SECONDS: f64 = 3600.0;

/// Column names the artifacts reserve for themselves.
pub const RESERVED_COLUMNS: [&str; 2] = ["feasible", "iteration_tag"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleOutput {
    pub name: String,
    pub true_value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvaluatorConfig {
    Builtin(String),
    Subprocess {
        command: Vec<String>,
        working_dir: Option<PathBuf>,
        timeout_seconds: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub application_name: String,
    pub objectives: Vec<String>,
    pub feasible_output: Option<FeasibleOutput>,
    pub space: DesignSpace,
    pub doe_samples: usize,
    pub optimization_iterations: usize,
    pub evaluations_per_iteration: usize,
    pub pareto_prediction_samples: usize,
    pub regressor: ForestHyperparams,
    pub classifier: ForestHyperparams,
    /// When false the feasibility filter is skipped even if the evaluator
    /// reports feasibility.
    pub classifier_enabled: bool,
    pub feasibility_threshold: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub evaluator: EvaluatorConfig,
}

impl Scenario {
    pub fn objective_count(&self) -> usize {
        self.objectives.len()
    }

    /// Whether the feasibility filter takes part in front prediction.
    pub fn uses_classifier(&self) -> bool {
        self.feasible_output.is_some() && self.classifier_enabled
    }
}

fn json_position(err: &serde_json::Error) -> Error {
    Error::Parse {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

/// Parses raw JSON text into a JSON value, mapping syntax errors to
/// [`Error::Parse`] with the line and column.
pub fn parse_json(text: &str) -> Result<Json> {
    serde_json::from_str(text).map_err(|e| json_position(&e))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    scenario_from_json(&parse_json(text)?)
}

/// Applies a `key=value` override to a scenario document. Dotted keys address
/// nested objects; the value is read as JSON when possible, else as a string.
pub fn apply_override(doc: &mut Json, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::validation(assignment, "override must look like key=value"))?;
    let value: Json = serde_json::from_str(raw).unwrap_or_else(|_| Json::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::validation(key, "override path crosses a non-object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Json::Object(Map::new()));
    }
    Ok(())
}

struct Fields<'a> {
    prefix: String,
    map: &'a Map<String, Json>,
}

impl<'a> Fields<'a> {
    fn new(prefix: &str, value: &'a Json, allowed: &[&str]) -> Result<Self> {
        let name = if prefix.is_empty() { "<root>" } else { prefix };
        let map = value
            .as_object()
            .ok_or_else(|| Error::validation(name, "expected a JSON object"))?;
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::validation(join(prefix, key), "unknown field"));
            }
        }
        Ok(Self {
            prefix: prefix.to_string(),
            map,
        })
    }

    fn path(&self, key: &str) -> String {
        join(&self.prefix, key)
    }

    fn get(&self, key: &str) -> Option<&'a Json> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        self.get(key)
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::validation(self.path(key), "expected a string"))
            })
            .transpose()
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| Error::validation(self.path(key), "expected a non-negative integer"))
            })
            .transpose()
    }

    fn positive(&self, key: &str, default: usize) -> Result<usize> {
        match self.uint(key)? {
            None => Ok(default),
            Some(0) => Err(Error::validation(self.path(key), "must be at least 1")),
            Some(v) => Ok(v as usize),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::validation(self.path(key), "expected a number"))
            })
            .transpose()
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| {
                v.as_bool()
                    .ok_or_else(|| Error::validation(self.path(key), "expected true or false"))
            })
            .transpose()
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

const ROOT_FIELDS: [&str; 12] = [
    "application_name",
    "optimization_objectives",
    "feasible_output",
    "input_parameters",
    "design_of_experiment",
    "optimization_iterations",
    "evaluations_per_optimization_iteration",
    "pareto_prediction_samples",
    "seed",
    "output_dir",
    "evaluator",
    "surrogate",
];

pub fn scenario_from_json(doc: &Json) -> Result<Scenario> {
    let root = Fields::new("", doc, &ROOT_FIELDS)?;
    let application_name = root
        .string("application_name")?
        .unwrap_or_else(|| "application".to_string());

    let objectives: Vec<String> = match root.get("optimization_objectives") {
        Some(Json::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::validation("optimization_objectives", "expected strings"))
            })
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::validation("optimization_objectives", "expected an array")),
        None => return Err(Error::validation("optimization_objectives", "missing")),
    };
    if objectives.is_empty() {
        return Err(Error::validation(
            "optimization_objectives",
            "at least one objective is required",
        ));
    }

    let feasible_output = match root.get("feasible_output") {
        None => None,
        Some(v) => {
            let f = Fields::new("feasible_output", v, &["name", "true_value"])?;
            Some(FeasibleOutput {
                name: f
                    .string("name")?
                    .ok_or_else(|| Error::validation(f.path("name"), "missing"))?,
                true_value: f.string("true_value")?.unwrap_or_else(|| "true".to_string()),
            })
        }
    };

    let space = parse_space(root.get("input_parameters"))?;

    let mut names: HashSet<&str> = space.names().collect();
    for reserved in RESERVED_COLUMNS {
        if names.contains(reserved) {
            return Err(Error::validation(
                "input_parameters",
                format!("`{reserved}` is a reserved column name"),
            ));
        }
    }
    let mut outputs: Vec<&str> = objectives.iter().map(String::as_str).collect();
    if let Some(f) = &feasible_output {
        outputs.push(&f.name);
    }
    for name in outputs {
        if name.is_empty() || name.contains([',', '"', '\n', '\r']) {
            return Err(Error::validation(
                "optimization_objectives",
                format!("bad output name {name:?}"),
            ));
        }
        if RESERVED_COLUMNS.contains(&name) && Some(name) != feasible_output.as_ref().map(|f| f.name.as_str()) {
            return Err(Error::validation(
                "optimization_objectives",
                format!("`{name}` is a reserved column name"),
            ));
        }
        if !names.insert(name) {
            return Err(Error::validation(
                "optimization_objectives",
                format!("duplicate name `{name}` among parameters and outputs"),
            ));
        }
    }

    let doe_samples = match root.get("design_of_experiment") {
        None => DEFAULT_DOE_SAMPLES,
        Some(v) => Fields::new("design_of_experiment", v, &["number_of_samples"])?
            .positive("number_of_samples", DEFAULT_DOE_SAMPLES)?,
    };
    let optimization_iterations = root
        .uint("optimization_iterations")?
        .map_or(DEFAULT_OPTIMIZATION_ITERATIONS, |v| v as usize);
    let evaluations_per_iteration = root.positive(
        "evaluations_per_optimization_iteration",
        DEFAULT_EVALUATIONS_PER_ITERATION,
    )?;
    let pareto_prediction_samples = root.positive("pareto_prediction_samples", DEFAULT_PARETO_PREDICTION_SAMPLES)?;
    let seed = root.uint("seed")?.unwrap_or(0);
    let output_dir = root
        .string("output_dir")?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(format!("{application_name}_output")));

    let evaluator = match root.get("evaluator") {
        None => return Err(Error::validation("evaluator", "missing")),
        Some(v) => parse_evaluator(v)?,
    };

    let mut regressor = ForestHyperparams::default();
    let mut classifier = ForestHyperparams::default();
    let mut classifier_enabled = true;
    let mut feasibility_threshold = 0.5;
    if let Some(v) = root.get("surrogate") {
        let s = Fields::new("surrogate", v, &["regressor", "classifier"])?;
        if let Some(r) = s.get("regressor") {
            regressor = parse_hyperparams("surrogate.regressor", r, false)?.0;
        }
        if let Some(c) = s.get("classifier") {
            let (hp, enabled, threshold) = parse_hyperparams("surrogate.classifier", c, true)?;
            classifier = hp;
            classifier_enabled = enabled;
            feasibility_threshold = threshold;
        }
    }

    Ok(Scenario {
        application_name,
        objectives,
        feasible_output,
        space,
        doe_samples,
        optimization_iterations,
        evaluations_per_iteration,
        pareto_prediction_samples,
        regressor,
        classifier,
        classifier_enabled,
        feasibility_threshold,
        seed,
        output_dir,
        evaluator,
    })
}

fn parse_space(value: Option<&Json>) -> Result<DesignSpace> {
    let map = match value {
        Some(Json::Object(map)) => map,
        Some(_) => return Err(Error::validation("input_parameters", "expected an object")),
        None => return Err(Error::validation("input_parameters", "missing")),
    };
    let params = map
        .iter()
        .map(|(name, spec)| parse_parameter(name, spec))
        .collect::<Result<Vec<_>>>()?;
    DesignSpace::new(params)
}

fn parse_parameter(name: &str, spec: &Json) -> Result<Parameter> {
    let prefix = format!("input_parameters.{name}");
    let f = Fields::new(&prefix, spec, &["parameter_type", "values", "prior"])?;
    let kind = f
        .string("parameter_type")?
        .ok_or_else(|| Error::validation(f.path("parameter_type"), "missing"))?;
    let values = match f.get("values") {
        Some(Json::Array(items)) => items,
        _ => return Err(Error::validation(f.path("values"), "expected an array")),
    };
    let numbers = || -> Result<Vec<f64>> {
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| Error::validation(f.path("values"), "expected numbers"))
            })
            .collect()
    };
    let bounds = |nums: Vec<f64>| -> Result<(f64, f64)> {
        match nums[..] {
            [lo, hi] => Ok((lo, hi)),
            _ => Err(Error::validation(f.path("values"), "expected [lower, upper]")),
        }
    };
    let domain = match kind.as_str() {
        "real" => {
            let (lower, upper) = bounds(numbers()?)?;
            Domain::Real { lower, upper }
        }
        "integer" => {
            let ints: Vec<i64> = values
                .iter()
                .map(|v| {
                    v.as_i64()
                        .ok_or_else(|| Error::validation(f.path("values"), "expected integers"))
                })
                .collect::<Result<_>>()?;
            match ints[..] {
                [lower, upper] => Domain::Integer { lower, upper },
                _ => return Err(Error::validation(f.path("values"), "expected [lower, upper]")),
            }
        }
        "ordinal" => Domain::Ordinal(numbers()?),
        "categorical" => Domain::Categorical(
            values
                .iter()
                .map(|v| match v {
                    Json::String(s) => Ok(s.clone()),
                    Json::Bool(b) => Ok(b.to_string()),
                    Json::Number(n) => Ok(n.to_string()),
                    _ => Err(Error::validation(f.path("values"), "expected strings")),
                })
                .collect::<Result<_>>()?,
        ),
        other => {
            return Err(Error::validation(
                f.path("parameter_type"),
                format!("unknown parameter kind {other:?}"),
            ))
        }
    };
    let prior = match f.get("prior") {
        None => Prior::Uniform,
        Some(Json::String(s)) => match s.as_str() {
            "uniform" => Prior::Uniform,
            "gaussian" => Prior::Gaussian,
            "decay" => Prior::Decay,
            "exponential" => Prior::Exponential,
            other => return Err(Error::validation(f.path("prior"), format!("unknown prior {other:?}"))),
        },
        Some(Json::Array(items)) => {
            let nums: Vec<f64> = items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::validation(f.path("prior"), "expected numbers"))
                })
                .collect::<Result<_>>()?;
            if kind == "categorical" {
                Prior::Categorical(nums)
            } else {
                match nums[..] {
                    [alpha, beta] => Prior::Beta { alpha, beta },
                    _ => return Err(Error::validation(f.path("prior"), "expected [alpha, beta]")),
                }
            }
        }
        Some(_) => return Err(Error::validation(f.path("prior"), "expected a name or a list")),
    };
    Parameter::new(name, domain, prior)
}

fn parse_evaluator(value: &Json) -> Result<EvaluatorConfig> {
    let f = Fields::new(
        "evaluator",
        value,
        &["builtin", "command", "working_directory", "timeout_seconds"],
    )?;
    match (f.get("builtin"), f.get("command")) {
        (Some(_), Some(_)) => Err(Error::validation("evaluator", "give either `builtin` or `command`")),
        (Some(_), None) => {
            let name = f.string("builtin")?.unwrap_or_default();
            if !BUILTIN_EVALUATORS.contains(&name.as_str()) {
                return Err(Error::validation(
                    "evaluator.builtin",
                    format!("unknown builtin {name:?}; known: {}", BUILTIN_EVALUATORS.join(", ")),
                ));
            }
            Ok(EvaluatorConfig::Builtin(name))
        }
        (None, Some(cmd)) => {
            let command: Vec<String> = match cmd {
                Json::String(s) => s.split_whitespace().map(str::to_string).collect(),
                Json::Array(items) => items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| Error::validation("evaluator.command", "expected strings"))
                    })
                    .collect::<Result<_>>()?,
                _ => return Err(Error::validation("evaluator.command", "expected a string or array")),
            };
            if command.is_empty() {
                return Err(Error::validation("evaluator.command", "empty command"));
            }
            let timeout_seconds = f.float("timeout_seconds")?.unwrap_or(DEFAULT_TIMEOUT_SECONDS);
            if !(timeout_seconds.is_finite() && timeout_seconds > 0.0) {
                return Err(Error::validation("evaluator.timeout_seconds", "must be positive"));
            }
            Ok(EvaluatorConfig::Subprocess {
                command,
                working_dir: f.string("working_directory")?.map(PathBuf::from),
                timeout_seconds,
            })
        }
        (None, None) => Err(Error::validation("evaluator", "needs `builtin` or `command`")),
    }
}

fn parse_hyperparams(prefix: &str, value: &Json, classifier: bool) -> Result<(ForestHyperparams, bool, f64)> {
    let allowed: &[&str] = if classifier {
        &[
            "n_estimators",
            "max_depth",
            "max_features",
            "bootstrap",
            "min_samples_split",
            "class_weight",
            "enabled",
            "threshold",
        ]
    } else {
        &[
            "n_estimators",
            "max_depth",
            "max_features",
            "bootstrap",
            "min_samples_split",
        ]
    };
    let f = Fields::new(prefix, value, allowed)?;
    let mut hp = ForestHyperparams::default();
    hp.n_estimators = f.positive("n_estimators", hp.n_estimators)?;
    if let Some(depth) = f.uint("max_depth")? {
        if depth == 0 {
            return Err(Error::validation(f.path("max_depth"), "must be at least 1 or null"));
        }
        hp.max_depth = Some(depth as usize);
    }
    match f.get("max_features") {
        None => {}
        Some(Json::String(s)) if s == "auto" => hp.max_features = MaxFeatures::Auto,
        Some(v) => {
            let frac = v
                .as_f64()
                .ok_or_else(|| Error::validation(f.path("max_features"), "expected \"auto\" or a fraction"))?;
            hp.max_features = MaxFeatures::Fraction(frac);
        }
    }
    if let Some(b) = f.boolean("bootstrap")? {
        hp.bootstrap = b;
    }
    hp.min_samples_split = f.positive("min_samples_split", hp.min_samples_split)?;
    if let Some(w) = f.get("class_weight") {
        let cw = Fields::new(&f.path("class_weight"), w, &["true", "false"])?;
        hp.class_weight = ClassWeight {
            feasible: cw
                .float("true")?
                .ok_or_else(|| Error::validation(cw.path("true"), "missing"))?,
            infeasible: cw
                .float("false")?
                .ok_or_else(|| Error::validation(cw.path("false"), "missing"))?,
        };
    }
    hp.validate().map_err(|e| match e {
        Error::Validation { field, message } => Error::validation(join(prefix, &field), message),
        other => other,
    })?;
    let enabled = f.boolean("enabled")?.unwrap_or(true);
    let threshold = f.float("threshold")?.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::validation(f.path("threshold"), "must lie in [0, 1]"));
    }
    Ok((hp, enabled, threshold))
}

fn hyperparams_json(hp: &ForestHyperparams) -> Map<String, Json> {
    let mut m = Map::new();
    m.insert("n_estimators".into(), json!(hp.n_estimators));
    m.insert("max_depth".into(), json!(hp.max_depth));
    m.insert(
        "max_features".into(),
        match hp.max_features {
            MaxFeatures::Auto => json!("auto"),
            MaxFeatures::Fraction(f) => json!(f),
        },
    );
    m.insert("bootstrap".into(), json!(hp.bootstrap));
    m.insert("min_samples_split".into(), json!(hp.min_samples_split));
    m
}

/// Renders a scenario in the same schema [`parse_scenario`] reads.
pub fn scenario_to_json(s: &Scenario) -> Json {
    let mut params = Map::new();
    for p in s.space.parameters() {
        let (kind, values) = match p.domain() {
            Domain::Real { lower, upper } => ("real", json!([lower, upper])),
            Domain::Integer { lower, upper } => ("integer", json!([lower, upper])),
            Domain::Ordinal(v) => ("ordinal", json!(v)),
            Domain::Categorical(l) => ("categorical", json!(l)),
        };
        let prior = match p.prior() {
            Prior::Uniform => json!("uniform"),
            Prior::Gaussian => json!("gaussian"),
            Prior::Decay => json!("decay"),
            Prior::Exponential => json!("exponential"),
            Prior::Beta { alpha, beta } => json!([alpha, beta]),
            Prior::Categorical(probs) => json!(probs),
        };
        params.insert(
            p.name().to_string(),
            json!({"parameter_type": kind, "values": values, "prior": prior}),
        );
    }
    let evaluator = match &s.evaluator {
        EvaluatorConfig::Builtin(name) => json!({ "builtin": name }),
        EvaluatorConfig::Subprocess {
            command,
            working_dir,
            timeout_seconds,
        } => {
            let mut m = Map::new();
            m.insert("command".into(), json!(command));
            if let Some(dir) = working_dir {
                m.insert("working_directory".into(), json!(dir.to_string_lossy()));
            }
            m.insert("timeout_seconds".into(), json!(timeout_seconds));
            Json::Object(m)
        }
    };
    let mut classifier = hyperparams_json(&s.classifier);
    classifier.insert(
        "class_weight".into(),
        json!({"true": s.classifier.class_weight.feasible, "false": s.classifier.class_weight.infeasible}),
    );
    classifier.insert("enabled".into(), json!(s.classifier_enabled));
    classifier.insert("threshold".into(), json!(s.feasibility_threshold));

    let mut root = Map::new();
    root.insert("application_name".into(), json!(s.application_name));
    root.insert("optimization_objectives".into(), json!(s.objectives));
    if let Some(f) = &s.feasible_output {
        root.insert(
            "feasible_output".into(),
            json!({"name": f.name, "true_value": f.true_value}),
        );
    }
    root.insert("input_parameters".into(), Json::Object(params));
    root.insert(
        "design_of_experiment".into(),
        json!({"number_of_samples": s.doe_samples}),
    );
    root.insert("optimization_iterations".into(), json!(s.optimization_iterations));
    root.insert(
        "evaluations_per_optimization_iteration".into(),
        json!(s.evaluations_per_iteration),
    );
    root.insert("pareto_prediction_samples".into(), json!(s.pareto_prediction_samples));
    root.insert("seed".into(), json!(s.seed));
    root.insert("output_dir".into(), json!(s.output_dir.to_string_lossy()));
    root.insert("evaluator".into(), evaluator);
    root.insert(
        "surrogate".into(),
        json!({"regressor": Json::Object(hyperparams_json(&s.regressor)), "classifier": Json::Object(classifier)}),
    );
    Json::Object(root)
}

pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(&scenario_to_json(s)).expect("scenario JSON is always serializable")
}
