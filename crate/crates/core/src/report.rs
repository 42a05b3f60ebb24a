//! Plot-ready run artifacts and their parsers, plus the multi-run summary.
//!
//! Sample tables share one layout: parameter columns in canonical order,
//! objective columns, `feasible`, `iteration_tag`.

use std::fs;
use std::path::Path;

use serde_json::{json, Value as Json};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::optimizer::{hvi_trace, RunOutcome};
use crate::pareto::{constrained_front, EvaluationRecord, Normalization};
use crate::scenario::Scenario;
use crate::space::{format_real, DesignSpace};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const PARETO_FILE: &str = "pareto.csv";
pub const HVI_TRACE_FILE: &str = "hvi_trace.csv";
pub const IMPORTANCE_FILE: &str = "feature_importance.csv";
pub const META_FILE: &str = "run_meta.json";
pub const TRUE_FRONT_FILE: &str = "true_front.csv";
pub const ALL_POINTS_FILE: &str = "all_points.csv";
pub const REPORT_FILE: &str = "report.csv";

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("artifact cells are UTF-8"))
}

pub fn samples_csv<'a>(
    space: &DesignSpace,
    objectives: &[String],
    records: impl IntoIterator<Item = &'a EvaluationRecord>,
) -> Result<String> {
    let mut w = writer();
    let mut header: Vec<&str> = space.names().collect();
    header.extend(objectives.iter().map(String::as_str));
    header.extend(["feasible", "iteration_tag"]);
    w.write_record(&header)?;
    for r in records {
        let mut row = space.format_config(&r.config);
        row.extend(r.objectives.iter().map(|v| format_real(*v)));
        row.push(r.feasible.to_string());
        row.push(r.iteration.to_string());
        w.write_record(&row)?;
    }
    finish(w)
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse {
        line,
        column: 0,
        message,
    }
}

fn parse_bool(cell: &str, line: usize) -> Result<bool> {
    match cell {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(parse_err(
            line,
            format!("feasible must be true or false, got {other:?}"),
        )),
    }
}

fn parse_f64(cell: &str, line: usize) -> Result<f64> {
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("{cell:?} is not a finite number")))
}

fn columns(header: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| parse_err(1, format!("missing column `{n}`")))
        })
        .collect()
}

/// Parses a table written by [`samples_csv`].
pub fn parse_samples(text: &str, space: &DesignSpace, objectives: &[String]) -> Result<Vec<EvaluationRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let params: Vec<&str> = space.names().collect();
    let pcols = columns(&header, &params)?;
    let objs: Vec<&str> = objectives.iter().map(String::as_str).collect();
    let ocols = columns(&header, &objs)?;
    let fcol = columns(&header, &["feasible", "iteration_tag"])?;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let cells: Vec<&str> = pcols.iter().map(|&c| &row[c]).collect();
        let config = space.parse_config(&cells).map_err(|e| parse_err(line, e.to_string()))?;
        let objectives = ocols.iter().map(|&c| parse_f64(&row[c], line)).collect::<Result<_>>()?;
        let iteration = row[fcol[1]]
            .parse::<i64>()
            .map_err(|_| parse_err(line, format!("bad iteration_tag {:?}", &row[fcol[1]])))?;
        out.push(EvaluationRecord {
            config,
            objectives,
            feasible: parse_bool(&row[fcol[0]], line)?,
            iteration,
        });
    }
    Ok(out)
}

/// Objective vectors of a reference file: every row (for normalization) and
/// the constrained front of those rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub points: Vec<Vec<f64>>,
    pub front: Vec<Vec<f64>>,
}

impl ReferenceSet {
    pub fn from_records(records: &[EvaluationRecord]) -> Self {
        Self {
            points: records.iter().map(|r| r.objectives.clone()).collect(),
            front: constrained_front(records)
                .into_iter()
                .map(|i| records[i].objectives.clone())
                .collect(),
        }
    }
}

/// Reads the objective columns (and `feasible`, when present) of any sample
/// table, such as `true_front.csv` or `all_points.csv`.
pub fn parse_reference(text: &str, objectives: &[String]) -> Result<ReferenceSet> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let objs: Vec<&str> = objectives.iter().map(String::as_str).collect();
    let ocols = columns(&header, &objs)?;
    let fcol = header.iter().position(|h| h == "feasible");
    let mut points = Vec::new();
    let mut feasible = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        points.push(
            ocols
                .iter()
                .map(|&c| parse_f64(&row[c], line))
                .collect::<Result<Vec<f64>>>()?,
        );
        feasible.push(match fcol {
            Some(c) => parse_bool(&row[c], line)?,
            None => true,
        });
    }
    let front = crate::pareto::constrained_front_indices(&points, &feasible)
        .into_iter()
        .map(|i| points[i].clone())
        .collect();
    Ok(ReferenceSet { points, front })
}

pub fn load_reference(path: &Path, objectives: &[String]) -> Result<ReferenceSet> {
    parse_reference(&fs::read_to_string(path)?, objectives)
}

pub fn hvi_trace_csv(trace: &[(i64, f64)]) -> Result<String> {
    let mut w = writer();
    w.write_record(["iteration_tag", "hvi"])?;
    for (t, v) in trace {
        w.write_record([t.to_string(), format_real(*v)])?;
    }
    finish(w)
}

pub fn parse_hvi_trace(text: &str) -> Result<Vec<(i64, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols = columns(&r.headers()?.clone(), &["iteration_tag", "hvi"])?;
    r.records()
        .enumerate()
        .map(|(i, row)| {
            let row = row?;
            let t = row[cols[0]]
                .parse::<i64>()
                .map_err(|_| parse_err(i + 2, "bad iteration_tag".into()))?;
            Ok((t, parse_f64(&row[cols[1]], i + 2)?))
        })
        .collect()
}

/// Rows are parameters, columns objectives; each column sums to one.
pub fn importance_csv(space: &DesignSpace, objectives: &[String], importances: &[Vec<f64>]) -> Result<String> {
    let mut w = writer();
    let mut header = vec!["parameter"];
    header.extend(objectives.iter().map(String::as_str));
    w.write_record(&header)?;
    for (j, name) in space.names().enumerate() {
        let mut row = vec![name.to_string()];
        row.extend(importances.iter().map(|col| format_real(col[j])));
        w.write_record(&row)?;
    }
    finish(w)
}

/// Returns `[objective][parameter]`, the layout [`importance_csv`] takes.
pub fn parse_importance(text: &str, objectives: &[String]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let objs: Vec<&str> = objectives.iter().map(String::as_str).collect();
    let ocols = columns(&header, &objs)?;
    let pcol = columns(&header, &["parameter"])?[0];
    let mut names = Vec::new();
    let mut matrix = vec![Vec::new(); objectives.len()];
    for (i, row) in r.records().enumerate() {
        let row = row?;
        names.push(row[pcol].to_string());
        for (k, &c) in ocols.iter().enumerate() {
            matrix[k].push(parse_f64(&row[c], i + 2)?);
        }
    }
    Ok((names, matrix))
}

/// How the hypervolume indicator of a run was scaled.
#[derive(Debug, Clone)]
pub struct HviSetup {
    pub norm: Normalization,
    pub trace: Vec<(i64, f64)>,
}

/// Normalizes by the deviation of every run record together with every
/// reference row, then traces the front's HVI per iteration.
pub fn hvi_setup(records: &[EvaluationRecord], reference: &ReferenceSet) -> Result<HviSetup> {
    let mut sample: Vec<&[f64]> = records.iter().map(|r| r.objectives.as_slice()).collect();
    sample.extend(reference.points.iter().map(Vec::as_slice));
    let norm = Normalization::from_points(&sample)?;
    let trace = hvi_trace(records, &reference.front, &norm)?;
    Ok(HviSetup { norm, trace })
}

/// Everything `run` leaves in its output directory, rendered.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub samples: String,
    pub pareto: String,
    pub hvi_trace: Option<String>,
    pub importance: String,
    pub meta: Json,
}

pub fn render_run(scenario: &Scenario, outcome: &RunOutcome, reference: Option<&ReferenceSet>) -> Result<RunArtifacts> {
    let space = &scenario.space;
    let records = outcome.archive.records();
    let hvi = match reference {
        Some(r) if scenario.objective_count() == 2 && !r.front.is_empty() => Some(hvi_setup(records, r)?),
        _ => None,
    };
    let iterations: Vec<Json> = outcome
        .history
        .iter()
        .map(|h| {
            json!({
                "iteration_tag": h.iteration,
                "predicted_front": h.predicted,
                "evaluated": h.evaluated,
                "fit_seconds": h.fit_seconds,
                "evaluate_seconds": h.evaluate_seconds,
            })
        })
        .collect();
    let feasible_found = !outcome.archive.front_indices().is_empty();
    let meta = json!({
        "application_name": scenario.application_name,
        "seed": scenario.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": space.names().collect::<Vec<_>>(),
        "objectives": scenario.objectives,
        "evaluations": records.len(),
        "iterations": outcome.iterations,
        "feasible_found": feasible_found,
        "feasibility_filter": scenario.uses_classifier(),
        "timings": {
            "warmup_seconds": outcome.warmup_seconds,
            "total_seconds": outcome.elapsed_seconds,
            "iterations": iterations,
        },
        "hvi": hvi.as_ref().map(|h| json!({
            "sigma": h.norm.sigma,
            "degenerate_objectives": h.norm.degenerate,
            "sigma_sample": "run records and reference rows",
            "reference_point": "max over reference and all traced fronts + 1e-6",
            "final": h.trace.last().map(|t| t.1),
        })),
        "scenario": crate::scenario::scenario_to_json(scenario),
    });
    Ok(RunArtifacts {
        samples: samples_csv(space, &scenario.objectives, records)?,
        pareto: samples_csv(space, &scenario.objectives, outcome.archive.front())?,
        hvi_trace: hvi.as_ref().map(|h| hvi_trace_csv(&h.trace)).transpose()?,
        importance: importance_csv(space, &scenario.objectives, &outcome.importances)?,
        meta,
    })
}

impl RunArtifacts {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SAMPLES_FILE), &self.samples)?;
        fs::write(dir.join(PARETO_FILE), &self.pareto)?;
        if let Some(trace) = &self.hvi_trace {
            fs::write(dir.join(HVI_TRACE_FILE), trace)?;
        }
        fs::write(dir.join(IMPORTANCE_FILE), &self.importance)?;
        let mut meta = serde_json::to_string_pretty(&self.meta)?;
        meta.push('\n');
        fs::write(dir.join(META_FILE), meta)?;
        Ok(())
    }
}

/// Writes what a failed run managed to evaluate.
pub fn write_partial(dir: &Path, scenario: &Scenario, records: &[EvaluationRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(SAMPLES_FILE),
        samples_csv(&scenario.space, &scenario.objectives, records)?,
    )?;
    Ok(())
}

/// Mean and 80% Student-t half-width of per-run values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Absent for a single run.
    pub ci80_half_width: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::State("no runs to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(Summary {
            mean,
            ci80_half_width: None,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::State(e.to_string()))?
        .inverse_cdf(0.9);
    Ok(Summary {
        mean,
        ci80_half_width: Some(t * (var / n).sqrt()),
    })
}

pub fn report_csv(runs: &[(String, f64)], summary: &Summary) -> Result<String> {
    let mut w = writer();
    w.write_record(["run", "hvi"])?;
    for (name, v) in runs {
        w.write_record([name.clone(), format_real(*v)])?;
    }
    w.write_record(["mean".to_string(), format_real(summary.mean)])?;
    w.write_record([
        "ci80_half_width".to_string(),
        summary.ci80_half_width.map(format_real).unwrap_or_default(),
    ])?;
    finish(w)
}
