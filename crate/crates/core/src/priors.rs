//! Beta priors and the random sampling used for warm-up and exploration.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::space::{
    enumerate_space, Configuration, DesignSpace, Domain, Parameter, Prior, Value, DEFAULT_ENUMERATION_CAP,
};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        let series = LANCZOS_COEF[1..]
            .iter()
            .enumerate()
            .fold(LANCZOS_COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
    }
}

fn check_shape(alpha: f64, beta: f64) -> Result<()> {
    if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "beta shape parameters must be positive, got ({alpha}, {beta})"
        )))
    }
}

/// Density of Beta(alpha, beta) at `x`. Returns `+inf` at an endpoint where
/// the density diverges.
pub fn beta_pdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_shape(alpha, beta)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("beta density is defined on [0, 1], got {x}")));
    }
    let ln_norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
    let edge = |exponent: f64| {
        if exponent < 0.0 {
            f64::INFINITY
        } else if exponent == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    if x == 0.0 {
        let e = edge(alpha - 1.0);
        return Ok(if e.is_infinite() || e == 0.0 { e } else { ln_norm.exp() });
    }
    if x == 1.0 {
        let e = edge(beta - 1.0);
        return Ok(if e.is_infinite() || e == 0.0 { e } else { ln_norm.exp() });
    }
    Ok((ln_norm + (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()).exp())
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.random::<f64>()
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = open_unit(rng);
    let u2 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Gamma(shape, 1) variate, Marsaglia and Tsang's squeeze method. Shapes
/// below one are boosted: `G(a) = G(a + 1) * U^(1/a)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let g = sample_gamma(shape + 1.0, rng);
        return g * open_unit(rng).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One Beta(alpha, beta) variate as `X / (X + Y)` with independent Gamma draws.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    check_shape(alpha, beta)?;
    loop {
        let x = sample_gamma(alpha, rng);
        let y = sample_gamma(beta, rng);
        let s = x + y;
        if s > 0.0 && s.is_finite() {
            return Ok((x / s).clamp(0.0, 1.0));
        }
    }
}

/// Maps a unit draw `u` onto a parameter's domain: reals and integers by
/// affine rescale (integers rounded half-to-even), ordinals by rescale onto
/// `[min, max]` then snapping to the nearest listed value (ties go low), and
/// categoricals by inverting the cumulative level probabilities.
pub fn value_from_unit(param: &Parameter, u: f64) -> Value {
    let u = u.clamp(0.0, 1.0);
    match param.domain() {
        Domain::Real { lower, upper } => Value::Real((lower + u * (upper - lower)).clamp(*lower, *upper)),
        Domain::Integer { lower, upper } => {
            let x = *lower as f64 + u * (*upper as f64 - *lower as f64);
            Value::Integer((x.round_ties_even() as i64).clamp(*lower, *upper))
        }
        Domain::Ordinal(values) => Value::Ordinal(snap_ordinal(values, u)),
        Domain::Categorical(levels) => {
            let probs: Vec<f64> = match param.prior() {
                Prior::Categorical(p) => p.clone(),
                _ => vec![1.0 / levels.len() as f64; levels.len()],
            };
            let mut cum = 0.0;
            let mut last_positive = 0;
            for (k, p) in probs.iter().enumerate() {
                if *p <= 0.0 {
                    continue;
                }
                last_positive = k;
                cum += p;
                if u < cum {
                    return Value::Categorical(k);
                }
            }
            Value::Categorical(last_positive)
        }
    }
}

fn snap_ordinal(values: &[f64], u: f64) -> usize {
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let x = lo + u * (hi - lo);
    let upper = values.partition_point(|v| *v < x);
    if upper == 0 {
        return 0;
    }
    if upper == values.len() {
        return values.len() - 1;
    }
    let below = upper - 1;
    if x - values[below] <= values[upper] - x {
        below
    } else {
        upper
    }
}

/// Draws one value of `param` from its prior.
pub fn sample_parameter<R: Rng + ?Sized>(param: &Parameter, rng: &mut R) -> Value {
    let u = match (param.domain(), param.prior().beta_shape()) {
        (Domain::Categorical(_), _) | (_, None) => rng.random::<f64>(),
        (_, Some((a, b))) => sample_beta(a, b, rng).expect("parameter priors are validated"),
    };
    value_from_unit(param, u)
}

/// Draws one value uniformly over the admissible values of `param`, ignoring
/// its prior.
pub fn sample_parameter_uniform<R: Rng + ?Sized>(param: &Parameter, rng: &mut R) -> Value {
    match param.domain() {
        Domain::Real { lower, upper } => {
            if lower == upper {
                Value::Real(*lower)
            } else {
                Value::Real(rng.random_range(*lower..=*upper))
            }
        }
        Domain::Integer { lower, upper } => Value::Integer(rng.random_range(*lower..=*upper)),
        Domain::Ordinal(values) => Value::Ordinal(rng.random_range(0..values.len())),
        Domain::Categorical(levels) => Value::Categorical(rng.random_range(0..levels.len())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// Each parameter from its prior.
    Prior,
    /// Each parameter uniformly over its values.
    Uniform,
}

pub fn sample_configuration<R: Rng + ?Sized>(space: &DesignSpace, mode: SamplingMode, rng: &mut R) -> Configuration {
    Configuration::new(
        space
            .parameters()
            .iter()
            .map(|p| match mode {
                SamplingMode::Prior => sample_parameter(p, rng),
                SamplingMode::Uniform => sample_parameter_uniform(p, rng),
            })
            .collect(),
    )
}

/// Up to `n` distinct configurations not in `exclude`.
///
/// Rejection sampling runs for at most `100 * n` draws; a finite space then
/// falls back to drawing from the enumeration of what is left. When every
/// remaining configuration is needed the enumeration is returned in order.
pub fn sample_distinct<R: Rng + ?Sized>(
    space: &DesignSpace,
    n: usize,
    exclude: &HashSet<Configuration>,
    mode: SamplingMode,
    rng: &mut R,
) -> Vec<Configuration> {
    let enumerable = enumerate_space(space, DEFAULT_ENUMERATION_CAP).is_ok();
    if enumerable {
        let card = space.cardinality().unwrap_or(0);
        let available = card.saturating_sub(exclude.len() as u128);
        if n as u128 >= available {
            return remaining(space, exclude);
        }
    }
    let mut seen: HashSet<Configuration> = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let max_attempts = n.saturating_mul(100);
    let mut attempts = 0;
    while out.len() < n && attempts < max_attempts {
        attempts += 1;
        let c = sample_configuration(space, mode, rng);
        if exclude.contains(&c) || seen.contains(&c) {
            continue;
        }
        seen.insert(c.clone());
        out.push(c);
    }
    if out.len() < n && enumerable {
        let mut rest: Vec<Configuration> = remaining(space, exclude)
            .into_iter()
            .filter(|c| !seen.contains(c))
            .collect();
        rest.shuffle(rng);
        out.extend(rest.into_iter().take(n - out.len()));
    }
    out
}

fn remaining(space: &DesignSpace, exclude: &HashSet<Configuration>) -> Vec<Configuration> {
    enumerate_space(space, DEFAULT_ENUMERATION_CAP)
        .map(|it| it.filter(|c| !exclude.contains(c)).collect())
        .unwrap_or_default()
}

/// Warm-up design of experiments: `min(n, |space|)` distinct configurations
/// drawn from the parameter priors.
pub fn warmup_sample<R: Rng + ?Sized>(space: &DesignSpace, n: usize, rng: &mut R) -> Vec<Configuration> {
    sample_distinct(space, n, &HashSet::new(), SamplingMode::Prior, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20u32 {
            assert!(close(ln_gamma(n as f64), fact.ln(), 1e-12), "n={n}");
            fact *= n as f64;
        }
        // Γ(1/2) = √π
        assert!(close(ln_gamma(0.5), PI.sqrt().ln(), 1e-12));
        // Γ(3/2) = √π / 2
        assert!(close(ln_gamma(1.5), (PI.sqrt() / 2.0).ln(), 1e-12));
    }

    #[test]
    fn beta_pdf_values() {
        assert!(close(beta_pdf(0.5, 1.0, 1.0).unwrap(), 1.0, 1e-12));
        // Γ(6) / (Γ(3)Γ(3)) * 0.5^4 = 30 / 16
        assert!(close(beta_pdf(0.5, 3.0, 3.0).unwrap(), 1.875, 1e-12));
        assert!(beta_pdf(0.0, 0.5, 1.5).unwrap().is_infinite());
        assert!(beta_pdf(1.0, 1.5, 0.5).unwrap().is_infinite());
        assert_eq!(beta_pdf(0.0, 3.0, 3.0).unwrap(), 0.0);
        assert!(close(beta_pdf(0.0, 1.0, 1.0).unwrap(), 1.0, 1e-12));
        assert!(matches!(beta_pdf(0.3, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(beta_pdf(1.2, 1.0, 1.0).is_err());
    }

    #[test]
    fn beta_sampling_rejects_bad_shape() {
        let mut rng = RngState::new(1, 0).rng();
        assert!(sample_beta(-1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn ordinal_rescale_and_snap() {
        let p = Parameter::ordinal("o", &[1.0, 5.0, 8.0]).unwrap();
        // 1 + 0.9 * 7 = 7.3 -> 8
        assert_eq!(value_from_unit(&p, 0.9), Value::Ordinal(2));
        // 4.5 -> 5
        assert_eq!(value_from_unit(&p, 0.5), Value::Ordinal(1));
        // 1 + u*7 = 3 exactly between 1 and 5 -> lower
        assert_eq!(value_from_unit(&p, 2.0 / 7.0), Value::Ordinal(0));
        assert_eq!(value_from_unit(&p, 0.0), Value::Ordinal(0));
        assert_eq!(value_from_unit(&p, 1.0), Value::Ordinal(2));
    }

    #[test]
    fn integer_rounds_half_to_even() {
        let p = Parameter::integer("i", 0, 4).unwrap();
        // 0.625 * 4 = 2.5 -> 2, 0.875 * 4 = 3.5 -> 4
        assert_eq!(value_from_unit(&p, 0.625), Value::Integer(2));
        assert_eq!(value_from_unit(&p, 0.875), Value::Integer(4));
    }

    #[test]
    fn degenerate_categorical_prior() {
        let p = Parameter::categorical("v", &["car", "truck", "motorbike"])
            .unwrap()
            .with_prior(Prior::Categorical(vec![1.0, 0.0, 0.0]))
            .unwrap();
        let mut rng = RngState::new(3, 0).rng();
        for _ in 0..500 {
            assert_eq!(sample_parameter(&p, &mut rng), Value::Categorical(0));
        }
    }

    #[test]
    fn categorical_frequencies_match_probabilities() {
        let probs = vec![0.2, 0.5, 0.3];
        let p = Parameter::categorical("v", &["a", "b", "c"])
            .unwrap()
            .with_prior(Prior::Categorical(probs.clone()))
            .unwrap();
        let mut rng = RngState::new(11, 0).rng();
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            if let Value::Categorical(k) = sample_parameter(&p, &mut rng) {
                counts[k] += 1;
            }
        }
        for (k, pk) in probs.iter().enumerate() {
            let freq = counts[k] as f64 / n as f64;
            let tol = 3.0 * (pk * (1.0 - pk) / n as f64).sqrt();
            assert!((freq - pk).abs() <= tol, "level {k}: {freq} vs {pk}");
        }
    }

    fn two_param_space() -> DesignSpace {
        DesignSpace::new(vec![
            Parameter::ordinal("a", &[1.0, 5.0, 8.0]).unwrap(),
            Parameter::categorical("b", &["true", "false"]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn warmup_covers_small_space() {
        let space = two_param_space();
        let mut rng = RngState::new(5, 0).rng();
        let s = warmup_sample(&space, 6, &mut rng);
        assert_eq!(s.len(), 6);
        assert_eq!(s.iter().collect::<HashSet<_>>().len(), 6);
        let s = warmup_sample(&space, 100, &mut rng);
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn warmup_is_deterministic() {
        let space = DesignSpace::new(vec![
            Parameter::integer("x", 0, 1000).unwrap(),
            Parameter::real("y", 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let a = warmup_sample(&space, 3, &mut RngState::new(42, 0).rng());
        let b = warmup_sample(&space, 3, &mut RngState::new(42, 0).rng());
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn skewed_prior_falls_back_to_enumeration() {
        // A strongly decaying prior makes the last values nearly unreachable;
        // asking for all but one forces the enumeration fallback.
        let space = DesignSpace::new(vec![Parameter::new(
            "x",
            Domain::Integer { lower: 0, upper: 50 },
            Prior::Beta {
                alpha: 0.05,
                beta: 20.0,
            },
        )
        .unwrap()])
        .unwrap();
        let s = warmup_sample(&space, 50, &mut RngState::new(9, 0).rng());
        assert_eq!(s.len(), 50);
        assert_eq!(s.iter().collect::<HashSet<_>>().len(), 50);
    }

    proptest! {
        #[test]
        fn samples_stay_in_domain(seed in any::<u64>(), a in 0.05f64..5.0, b in 0.05f64..5.0) {
            let params = [
                Parameter::real("r", -2.0, 3.0).unwrap(),
                Parameter::integer("i", -4, 7).unwrap(),
                Parameter::ordinal("o", &[0.1, 0.2, 7.0]).unwrap(),
            ];
            let mut rng = RngState::new(seed, 0).rng();
            for p in params {
                let p = p.with_prior(Prior::Beta { alpha: a, beta: b }).unwrap();
                for _ in 0..20 {
                    let v = sample_parameter(&p, &mut rng);
                    prop_assert!(p.contains(&v));
                    let v = sample_parameter_uniform(&p, &mut rng);
                    prop_assert!(p.contains(&v));
                }
            }
            let u = sample_beta(a, b, &mut rng).unwrap();
            prop_assert!((0.0..=1.0).contains(&u));
        }
    }
}
