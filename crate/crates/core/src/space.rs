//! Typed design spaces, configurations and their numeric encoding.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Largest space `enumerate_space` walks unless told otherwise.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Integer,
    Ordinal,
    Categorical,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Real => "real",
            ParamKind::Integer => "integer",
            ParamKind::Ordinal => "ordinal",
            ParamKind::Categorical => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Real {
        lower: f64,
        upper: f64,
    },
    Integer {
        lower: i64,
        upper: i64,
    },
    /// Strictly increasing.
    Ordinal(Vec<f64>),
    Categorical(Vec<String>),
}

/// Prior belief over a parameter's values.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Uniform,
    Gaussian,
    Decay,
    Exponential,
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// One probability per categorical level, in level order.
    Categorical(Vec<f64>),
}

impl Prior {
    /// Beta shape parameters, or `None` for categorical probabilities.
    pub fn beta_shape(&self) -> Option<(f64, f64)> {
        match *self {
            Prior::Uniform => Some((1.0, 1.0)),
            Prior::Gaussian => Some((3.0, 3.0)),
            Prior::Decay => Some((0.5, 1.5)),
            Prior::Exponential => Some((1.5, 0.5)),
            Prior::Beta { alpha, beta } => Some((alpha, beta)),
            Prior::Categorical(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    domain: Domain,
    prior: Prior,
}

impl Parameter {
    /// Validates and builds a parameter. Ordinal values are sorted ascending.
    pub fn new(name: impl Into<String>, domain: Domain, prior: Prior) -> Result<Self> {
        let name = name.into();
        let field = |what: &str| format!("input_parameters.{name}.{what}");
        if name.is_empty() {
            return Err(Error::validation("input_parameters", "empty parameter name"));
        }
        if name.contains([',', '"', '\n', '\r']) {
            return Err(Error::validation(field("name"), "name contains a reserved character"));
        }
        let domain = match domain {
            Domain::Real { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() || lower > upper {
                    return Err(Error::validation(
                        field("values"),
                        format!("bounds [{lower}, {upper}] must be finite with lower <= upper"),
                    ));
                }
                Domain::Real { lower, upper }
            }
            Domain::Integer { lower, upper } => {
                if lower > upper {
                    return Err(Error::validation(
                        field("values"),
                        format!("bounds [{lower}, {upper}] must satisfy lower <= upper"),
                    ));
                }
                Domain::Integer { lower, upper }
            }
            Domain::Ordinal(mut values) => {
                if values.is_empty() {
                    return Err(Error::validation(field("values"), "ordinal value list is empty"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(field("values"), "ordinal values must be finite"));
                }
                values.sort_by(f64::total_cmp);
                if values.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::validation(
                        field("values"),
                        "ordinal values must be strictly increasing (duplicate value)",
                    ));
                }
                Domain::Ordinal(values.into_iter().map(|v| v + 0.0).collect())
            }
            Domain::Categorical(levels) => {
                if levels.is_empty() {
                    return Err(Error::validation(field("values"), "categorical level list is empty"));
                }
                let mut seen = HashSet::new();
                for level in &levels {
                    if level.is_empty() || level.contains([',', '"', '\n', '\r']) {
                        return Err(Error::validation(
                            field("values"),
                            format!("level {level:?} is empty or contains a reserved character"),
                        ));
                    }
                    if !seen.insert(level.as_str()) {
                        return Err(Error::validation(field("values"), format!("duplicate level {level:?}")));
                    }
                }
                Domain::Categorical(levels)
            }
        };
        match (&domain, &prior) {
            (Domain::Categorical(levels), Prior::Categorical(probs)) => {
                if probs.len() != levels.len() {
                    return Err(Error::validation(
                        field("prior"),
                        format!("{} probabilities for {} levels", probs.len(), levels.len()),
                    ));
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::validation(field("prior"), "probabilities must be non-negative"));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::validation(field("prior"), format!("probabilities sum to {sum}")));
                }
            }
            (Domain::Categorical(_), Prior::Uniform) => {}
            (Domain::Categorical(_), _) => {
                return Err(Error::validation(
                    field("prior"),
                    "categorical parameters take a list of probabilities or \"uniform\"",
                ));
            }
            (_, Prior::Categorical(_)) => {
                return Err(Error::validation(
                    field("prior"),
                    "probability lists only apply to categorical parameters",
                ));
            }
            (_, Prior::Beta { alpha, beta })
                if !(alpha.is_finite() && beta.is_finite() && *alpha > 0.0 && *beta > 0.0) =>
            {
                return Err(Error::validation(
                    field("prior"),
                    format!("beta shape ({alpha}, {beta}) must be positive"),
                ));
            }
            _ => {}
        }
        Ok(Self { name, domain, prior })
    }

    pub fn real(name: &str, lower: f64, upper: f64) -> Result<Self> {
        Self::new(name, Domain::Real { lower, upper }, Prior::Uniform)
    }

    pub fn integer(name: &str, lower: i64, upper: i64) -> Result<Self> {
        Self::new(name, Domain::Integer { lower, upper }, Prior::Uniform)
    }

    pub fn ordinal(name: &str, values: &[f64]) -> Result<Self> {
        Self::new(name, Domain::Ordinal(values.to_vec()), Prior::Uniform)
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Result<Self> {
        Self::new(
            name,
            Domain::Categorical(levels.iter().map(|s| s.to_string()).collect()),
            Prior::Uniform,
        )
    }

    pub fn with_prior(self, prior: Prior) -> Result<Self> {
        Self::new(self.name, self.domain, prior)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    pub fn kind(&self) -> ParamKind {
        match self.domain {
            Domain::Real { .. } => ParamKind::Real,
            Domain::Integer { .. } => ParamKind::Integer,
            Domain::Ordinal(_) => ParamKind::Ordinal,
            Domain::Categorical(_) => ParamKind::Categorical,
        }
    }

    /// Number of admissible values, `None` for real parameters.
    pub fn cardinality(&self) -> Option<u128> {
        match &self.domain {
            Domain::Real { lower, upper } => (lower == upper).then_some(1),
            Domain::Integer { lower, upper } => Some((*upper as i128 - *lower as i128 + 1) as u128),
            Domain::Ordinal(v) => Some(v.len() as u128),
            Domain::Categorical(l) => Some(l.len() as u128),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (&self.domain, value) {
            (Domain::Real { lower, upper }, Value::Real(v)) => v.is_finite() && lower <= v && v <= upper,
            (Domain::Integer { lower, upper }, Value::Integer(v)) => lower <= v && v <= upper,
            (Domain::Ordinal(values), Value::Ordinal(i)) => *i < values.len(),
            (Domain::Categorical(levels), Value::Categorical(i)) => *i < levels.len(),
            _ => false,
        }
    }

    /// The `index`-th admissible value in ascending order (finite domains).
    pub(crate) fn value_at(&self, index: u128) -> Value {
        match &self.domain {
            Domain::Real { lower, .. } => Value::Real(*lower),
            Domain::Integer { lower, .. } => Value::Integer((*lower as i128 + index as i128) as i64),
            Domain::Ordinal(_) => Value::Ordinal(index as usize),
            Domain::Categorical(_) => Value::Categorical(index as usize),
        }
    }

    /// Canonical wire form: integers without a decimal point, reals in
    /// shortest round-trip form, categorical levels verbatim.
    pub fn format_value(&self, value: &Value) -> String {
        match (&self.domain, value) {
            (_, Value::Real(v)) => format_real(*v),
            (_, Value::Integer(v)) => v.to_string(),
            (Domain::Ordinal(values), Value::Ordinal(i)) => format_real(values[*i]),
            (Domain::Categorical(levels), Value::Categorical(i)) => levels[*i].clone(),
            (_, other) => format!("{other:?}"),
        }
    }

    /// Parses a wire value back into this parameter's domain.
    pub fn parse_value(&self, text: &str) -> Result<Value> {
        let text = text.trim();
        let bad = || Error::Domain(format!("{text:?} is not a value of parameter `{}`", self.name));
        let value = match &self.domain {
            Domain::Real { .. } => Value::Real(text.parse::<f64>().map_err(|_| bad())? + 0.0),
            Domain::Integer { .. } => match text.parse::<i64>() {
                Ok(v) => Value::Integer(v),
                Err(_) => {
                    let f = text.parse::<f64>().map_err(|_| bad())?;
                    if f.fract() != 0.0 || f.abs() > i64::MAX as f64 {
                        return Err(bad());
                    }
                    Value::Integer(f as i64)
                }
            },
            Domain::Ordinal(values) => {
                let f = text.parse::<f64>().map_err(|_| bad())?;
                Value::Ordinal(values.iter().position(|v| *v == f).ok_or_else(bad)?)
            }
            Domain::Categorical(levels) => Value::Categorical(levels.iter().position(|l| l == text).ok_or_else(bad)?),
        };
        if !self.contains(&value) {
            return Err(bad());
        }
        Ok(value)
    }
}

pub fn format_real(v: f64) -> String {
    // `Display` prints the shortest representation that round-trips.
    format!("{}", v + 0.0)
}

/// One parameter value. Ordinal and categorical values are stored as indices
/// into their (sorted) domain lists.
#[derive(Debug, Clone, Copy)]
pub enum Value {
    Real(f64),
    Integer(i64),
    Ordinal(usize),
    Categorical(usize),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            (Value::Integer(a), Value::Integer(b)) => a == b,
            (Value::Ordinal(a), Value::Ordinal(b)) => a == b,
            (Value::Categorical(a), Value::Categorical(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Real(v) => v.to_bits().hash(state),
            Value::Integer(v) => v.hash(state),
            Value::Ordinal(i) | Value::Categorical(i) => i.hash(state),
        }
    }
}

/// A point of the design space, one value per parameter in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    values: Vec<Value>,
}

impl Configuration {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }
}

/// How the forest may split on a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Threshold splits (`x <= t`).
    Ordered,
    /// Level-equality splits only.
    Unordered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    parameters: Vec<Parameter>,
}

impl DesignSpace {
    pub fn new(parameters: Vec<Parameter>) -> Result<Self> {
        if parameters.is_empty() {
            return Err(Error::validation("input_parameters", "design space has no parameters"));
        }
        let mut seen = HashSet::new();
        for p in &parameters {
            if !seen.insert(p.name()) {
                return Err(Error::validation(
                    "input_parameters",
                    format!("duplicate parameter name `{}`", p.name()),
                ));
            }
        }
        Ok(Self { parameters })
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.parameters.iter().map(|p| p.name())
    }

    /// Exact number of configurations, `None` when a real parameter makes the
    /// space uncountable. Saturates at `u128::MAX`.
    pub fn cardinality(&self) -> Option<u128> {
        self.parameters
            .iter()
            .try_fold(1u128, |acc, p| p.cardinality().map(|c| acc.saturating_mul(c)))
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.parameters
            .iter()
            .map(|p| match p.kind() {
                ParamKind::Categorical => FeatureKind::Unordered,
                _ => FeatureKind::Ordered,
            })
            .collect()
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        config.values.len() == self.parameters.len()
            && self.parameters.iter().zip(&config.values).all(|(p, v)| p.contains(v))
    }

    /// Maps a configuration to one real feature per parameter. Categorical
    /// levels become their 0-based index (see [`DesignSpace::feature_kinds`]).
    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        if config.values.len() != self.parameters.len() {
            return Err(Error::Dimension {
                expected: self.parameters.len(),
                got: config.values.len(),
            });
        }
        self.parameters
            .iter()
            .zip(&config.values)
            .map(|(p, v)| {
                if !p.contains(v) {
                    return Err(Error::Domain(format!(
                        "value {v:?} outside the domain of `{}`",
                        p.name()
                    )));
                }
                Ok(match (p.domain(), v) {
                    (_, Value::Real(x)) => *x,
                    (_, Value::Integer(x)) => *x as f64,
                    (Domain::Ordinal(values), Value::Ordinal(i)) => values[*i],
                    (_, Value::Categorical(i)) => *i as f64,
                    _ => unreachable!("contains() checked the value kind"),
                })
            })
            .collect()
    }

    /// Canonical string form of every value, in parameter order.
    pub fn format_config(&self, config: &Configuration) -> Vec<String> {
        self.parameters
            .iter()
            .zip(&config.values)
            .map(|(p, v)| p.format_value(v))
            .collect()
    }

    pub fn parse_config<S: AsRef<str>>(&self, fields: &[S]) -> Result<Configuration> {
        if fields.len() != self.parameters.len() {
            return Err(Error::Dimension {
                expected: self.parameters.len(),
                got: fields.len(),
            });
        }
        let values = self
            .parameters
            .iter()
            .zip(fields)
            .map(|(p, f)| p.parse_value(f.as_ref()))
            .collect::<Result<_>>()?;
        Ok(Configuration { values })
    }

    /// Builds a configuration from `(name, wire value)` pairs in any order.
    pub fn config_from_pairs(&self, pairs: &[(&str, &str)]) -> Result<Configuration> {
        let fields = self
            .parameters
            .iter()
            .map(|p| {
                pairs
                    .iter()
                    .find(|(n, _)| *n == p.name())
                    .map(|(_, v)| *v)
                    .ok_or_else(|| Error::Domain(format!("missing value for `{}`", p.name())))
            })
            .collect::<Result<Vec<_>>>()?;
        self.parse_config(&fields)
    }
}

/// Lexicographic walk over every configuration of a finite space, the last
/// parameter varying fastest.
pub struct Enumeration<'a> {
    space: &'a DesignSpace,
    sizes: Vec<u128>,
    counters: Option<Vec<u128>>,
}

impl Iterator for Enumeration<'_> {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        let counters = self.counters.as_mut()?;
        let config = Configuration {
            values: self
                .space
                .parameters
                .iter()
                .zip(counters.iter())
                .map(|(p, &i)| p.value_at(i))
                .collect(),
        };
        let mut pos = counters.len();
        loop {
            if pos == 0 {
                self.counters = None;
                break;
            }
            pos -= 1;
            counters[pos] += 1;
            if counters[pos] < self.sizes[pos] {
                break;
            }
            counters[pos] = 0;
        }
        Some(config)
    }
}

/// Enumerates a finite space with at most `cap` configurations.
pub fn enumerate_space(space: &DesignSpace, cap: u128) -> Result<Enumeration<'_>> {
    if let Some(p) = space.parameters.iter().find(|p| p.kind() == ParamKind::Real) {
        return Err(Error::UnsupportedEnumeration(format!(
            "real parameter `{}` cannot be enumerated",
            p.name()
        )));
    }
    let card = space.cardinality().unwrap_or(u128::MAX);
    if card > cap {
        return Err(Error::UnsupportedEnumeration(format!(
            "space has {card} configurations, above the cap of {cap}"
        )));
    }
    let sizes: Vec<u128> = space.parameters.iter().map(|p| p.cardinality().unwrap_or(1)).collect();
    Ok(Enumeration {
        space,
        counters: Some(vec![0; sizes.len()]),
        sizes,
    })
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
