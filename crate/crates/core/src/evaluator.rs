//! The black-box boundary: built-in synthetic benchmarks and external
//! evaluators driven over a CSV-on-pipes protocol.
//!
//! Request (child stdin): header of parameter names in canonical order, one
//! row per configuration. Response (child stdout): parameter columns plus
//! one column per objective and, when configured, the feasibility column.
//! Rows are joined back to requests by their parameter values, so the child
//! may answer in any order.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pareto::{constrained_front, EvaluationRecord, WARMUP_TAG};
use crate::scenario::{EvaluatorConfig, FeasibleOutput, Scenario};
use crate::space::{enumerate_space, Configuration, DesignSpace, Domain, Parameter, Prior, DEFAULT_ENUMERATION_CAP};

pub const BUILTIN_EVALUATORS: [&str; 2] = ["toy_fpga", "blackscholes_like"];

/// Result of evaluating one configuration: objective values in scenario
/// order and the feasibility flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub objectives: Vec<f64>,
    pub feasible: bool,
}

pub trait Evaluator: Sync {
    /// Evaluates every configuration of `batch`, answering in batch order.
    fn evaluate(&self, space: &DesignSpace, batch: &[Configuration]) -> Result<Vec<Outcome>>;
}

/// Cycle and logic estimates of the synthetic accelerator benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyFpga {
    pub cycles: f64,
    pub logic: f64,
    pub feasible: bool,
}

pub const TOY_FPGA_LOGIC_BUDGET: f64 = 120.0;
const TOY_FPGA_TILES: [i64; 6] = [2, 4, 8, 16, 32, 64];
const TOY_FPGA_PAR: [i64; 5] = [1, 2, 4, 8, 16];

/// `tile` in {2..64} (powers of two), `par` in {1..16} (powers of two),
/// `pipelined`, `banks` in 1..=4.
pub fn toy_fpga(tile: i64, par: i64, pipelined: bool, banks: i64) -> Result<ToyFpga> {
    if !TOY_FPGA_TILES.contains(&tile) || !TOY_FPGA_PAR.contains(&par) || !(1..=4).contains(&banks) {
        return Err(Error::Domain(format!(
            "toy_fpga point (T={tile}, P={par}, B={banks}) outside its domain"
        )));
    }
    let div_ceil = |a: i64, b: i64| (a + b - 1) / b;
    let pipe_cycles = if pipelined { 1 } else { 2 };
    let pipe_logic = if pipelined { 2 } else { 1 };
    let cycles = div_ceil(4096, tile) * div_ceil(tile, par) * pipe_cycles + 64 * banks;
    let logic = 5 * par + 3 * tile * pipe_logic + 7 * banks;
    Ok(ToyFpga {
        cycles: cycles as f64,
        logic: logic as f64,
        feasible: logic as f64 <= TOY_FPGA_LOGIC_BUDGET,
    })
}

/// The 240-point design space of [`toy_fpga`], tile and parallelism carrying
/// a decay prior.
pub fn toy_fpga_space() -> DesignSpace {
    let tiles: Vec<f64> = TOY_FPGA_TILES.iter().map(|&v| v as f64).collect();
    let pars: Vec<f64> = TOY_FPGA_PAR.iter().map(|&v| v as f64).collect();
    DesignSpace::new(vec![
        Parameter::new("T", Domain::Ordinal(tiles), Prior::Decay).unwrap(),
        Parameter::new("P", Domain::Ordinal(pars), Prior::Decay).unwrap(),
        Parameter::categorical("S", &["true", "false"]).unwrap(),
        Parameter::integer("B", 1, 4).unwrap(),
    ])
    .unwrap()
}

/// Synthetic option-pricing kernel: the inner parallelization factor `ip`
/// drives both runtime and logic.
pub fn blackscholes_like(ip: i64, op: i64, tile: i64, pipelined: bool) -> (f64, f64, bool) {
    let runtime = 100_000.0 / ip as f64 + 800.0 / op as f64 + tile as f64 / 4.0 + if pipelined { 0.0 } else { 150.0 };
    let logic = 3.0 * ip as f64 + op as f64 + tile as f64 / 128.0 + if pipelined { 4.0 } else { 0.0 };
    (runtime, logic, logic <= 80.0)
}

pub fn blackscholes_like_space() -> DesignSpace {
    DesignSpace::new(vec![
        Parameter::ordinal("ip", &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0]).unwrap(),
        Parameter::ordinal("op", &[1.0, 2.0, 4.0, 8.0]).unwrap(),
        Parameter::ordinal("tile", &[32.0, 64.0, 128.0, 256.0, 512.0]).unwrap(),
        Parameter::categorical("pipelined", &["true", "false"]).unwrap(),
    ])
    .unwrap()
}

/// Reads named parameters out of configurations for the built-ins.
struct NamedReader {
    indices: Vec<usize>,
}

impl NamedReader {
    fn new(space: &DesignSpace, names: &[&str], builtin: &str) -> Result<Self> {
        let indices = names
            .iter()
            .map(|n| {
                space
                    .names()
                    .position(|p| p == *n)
                    .ok_or_else(|| Error::Protocol(format!("builtin `{builtin}` needs a parameter named `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { indices })
    }

    fn int(&self, space: &DesignSpace, c: &Configuration, slot: usize) -> Result<i64> {
        let i = self.indices[slot];
        let v = space.encode(c)?[i];
        if v.fract() != 0.0 {
            return Err(Error::Domain(format!("{v} is not an integer value")));
        }
        Ok(v as i64)
    }

    fn flag(&self, space: &DesignSpace, c: &Configuration, slot: usize) -> Result<bool> {
        let i = self.indices[slot];
        let p = &space.parameters()[i];
        match p.format_value(&c.values()[i]).as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(Error::Domain(format!(
                "`{}` must be true or false, got {other}",
                p.name()
            ))),
        }
    }
}

/// In-process evaluator for the registered synthetic benchmarks.
pub struct BuiltinEvaluator {
    name: String,
    /// Index into the builtin's output list for each scenario objective.
    selection: Vec<usize>,
    reader: NamedReader,
    report_feasibility: bool,
}

impl BuiltinEvaluator {
    pub fn new(
        name: &str,
        space: &DesignSpace,
        objectives: &[String],
        feasible_output: Option<&FeasibleOutput>,
    ) -> Result<Self> {
        let (outputs, params): (&[&str], &[&str]) = match name {
            "toy_fpga" => (&["cycles", "logic"], &["T", "P", "S", "B"]),
            "blackscholes_like" => (&["runtime", "logic"], &["ip", "op", "tile", "pipelined"]),
            other => return Err(Error::Protocol(format!("unknown builtin evaluator `{other}`"))),
        };
        let selection = objectives
            .iter()
            .map(|o| {
                outputs.iter().position(|n| n == o).ok_or_else(|| {
                    Error::Protocol(format!(
                        "builtin `{name}` has no objective `{o}` (it reports {})",
                        outputs.join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            name: name.to_string(),
            selection,
            reader: NamedReader::new(space, params, name)?,
            report_feasibility: feasible_output.is_some(),
        })
    }

    fn evaluate_one(&self, space: &DesignSpace, c: &Configuration) -> Result<Outcome> {
        let r = &self.reader;
        let (outputs, feasible) = match self.name.as_str() {
            "toy_fpga" => {
                let t = toy_fpga(
                    r.int(space, c, 0)?,
                    r.int(space, c, 1)?,
                    r.flag(space, c, 2)?,
                    r.int(space, c, 3)?,
                )?;
                ([t.cycles, t.logic], t.feasible)
            }
            _ => {
                let (rt, logic, ok) = blackscholes_like(
                    r.int(space, c, 0)?,
                    r.int(space, c, 1)?,
                    r.int(space, c, 2)?,
                    r.flag(space, c, 3)?,
                );
                ([rt, logic], ok)
            }
        };
        Ok(Outcome {
            objectives: self.selection.iter().map(|&i| outputs[i]).collect(),
            feasible: feasible || !self.report_feasibility,
        })
    }
}

impl Evaluator for BuiltinEvaluator {
    fn evaluate(&self, space: &DesignSpace, batch: &[Configuration]) -> Result<Vec<Outcome>> {
        batch.par_iter().map(|c| self.evaluate_one(space, c)).collect()
    }
}

/// External evaluator: one child process per batch.
pub struct SubprocessEvaluator {
    pub command: Vec<String>,
    pub working_dir: Option<PathBuf>,
    pub timeout: Duration,
    pub objectives: Vec<String>,
    pub feasible_output: Option<FeasibleOutput>,
}

impl SubprocessEvaluator {
    pub fn request_csv(space: &DesignSpace, batch: &[Configuration]) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(space.names())?;
        for c in batch {
            w.write_record(space.format_config(c))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("canonical values are UTF-8"))
    }

    fn run_child(&self, input: String) -> Result<String> {
        let mut cmd = Command::new(&self.command[0]);
        cmd.args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(dir) = &self.working_dir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| Error::Evaluation {
            message: format!("cannot start `{}`: {e}", self.command.join(" ")),
            raw_output: String::new(),
        })?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // A child that exits early closes the pipe; that surfaces as a
            // protocol error below rather than here.
            let _ = stdin.write_all(input.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let out_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stdout.read_to_end(&mut buf);
            buf
        });
        let err_reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });

        let started = Instant::now();
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if started.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            thread::sleep(Duration::from_millis(5));
        };
        let _ = writer.join();
        let out = String::from_utf8_lossy(&out_reader.join().unwrap_or_default()).into_owned();
        let err = String::from_utf8_lossy(&err_reader.join().unwrap_or_default()).into_owned();
        let raw = format!("stdout:\n{out}\nstderr:\n{err}");
        match status {
            None => Err(Error::Evaluation {
                message: format!("evaluator timed out after {:?}", self.timeout),
                raw_output: raw,
            }),
            Some(s) if !s.success() => Err(Error::Evaluation {
                message: format!("evaluator exited with {s}"),
                raw_output: raw,
            }),
            Some(_) => Ok(out),
        }
    }

    /// Joins a response body to the requested batch.
    pub fn parse_response(&self, space: &DesignSpace, batch: &[Configuration], body: &str) -> Result<Vec<Outcome>> {
        let fail = |message: String| Error::Evaluation {
            message,
            raw_output: body.to_string(),
        };
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| fail(format!("unreadable response header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        let column = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| fail(format!("response lacks column `{name}`")))
        };
        let param_cols: Vec<usize> = space.names().map(column).collect::<Result<_>>()?;
        let obj_cols: Vec<usize> = self.objectives.iter().map(|o| column(o)).collect::<Result<_>>()?;
        let feas_col = self.feasible_output.as_ref().map(|f| column(&f.name)).transpose()?;

        let wanted: HashMap<&Configuration, usize> = batch.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut answers: Vec<Option<Outcome>> = vec![None; batch.len()];
        for (line, row) in reader.records().enumerate() {
            let row = row.map_err(|e| fail(format!("bad response row {}: {e}", line + 1)))?;
            let cells: Vec<&str> = param_cols.iter().map(|&i| row.get(i).unwrap_or("")).collect();
            let config = space
                .parse_config(&cells)
                .map_err(|e| fail(format!("response row {}: {e}", line + 1)))?;
            let slot = *wanted.get(&config).ok_or_else(|| {
                fail(format!(
                    "response row {} answers unrequested configuration {}",
                    line + 1,
                    cells.join(",")
                ))
            })?;
            if answers[slot].is_some() {
                return Err(fail(format!("configuration {} answered twice", cells.join(","))));
            }
            let objectives = obj_cols
                .iter()
                .zip(&self.objectives)
                .map(|(&i, name)| {
                    let cell = row.get(i).unwrap_or("");
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| fail(format!("objective `{name}` value {cell:?} is not a finite number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let feasible = match (feas_col, &self.feasible_output) {
                (Some(i), Some(f)) => row.get(i).unwrap_or("") == f.true_value,
                _ => true,
            };
            answers[slot] = Some(Outcome { objectives, feasible });
        }
        answers
            .into_iter()
            .zip(batch)
            .map(|(a, c)| {
                a.ok_or_else(|| {
                    fail(format!(
                        "response is missing configuration {}",
                        space.format_config(c).join(",")
                    ))
                })
            })
            .collect()
    }
}

impl Evaluator for SubprocessEvaluator {
    fn evaluate(&self, space: &DesignSpace, batch: &[Configuration]) -> Result<Vec<Outcome>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let body = self.run_child(Self::request_csv(space, batch)?)?;
        self.parse_response(space, batch, &body)
    }
}

/// Builds the evaluator a scenario names. Relative working directories are
/// resolved against `base_dir`, which is also the default.
pub fn evaluator_for(scenario: &Scenario, base_dir: &Path) -> Result<Box<dyn Evaluator>> {
    Ok(match &scenario.evaluator {
        EvaluatorConfig::Builtin(name) => Box::new(BuiltinEvaluator::new(
            name,
            &scenario.space,
            &scenario.objectives,
            scenario.feasible_output.as_ref(),
        )?),
        EvaluatorConfig::Subprocess {
            command,
            working_dir,
            timeout_seconds,
        } => Box::new(SubprocessEvaluator {
            command: command.clone(),
            working_dir: Some(match working_dir {
                Some(d) if d.is_absolute() => d.clone(),
                Some(d) => base_dir.join(d),
                None => base_dir.to_path_buf(),
            }),
            timeout: Duration::from_secs_f64(*timeout_seconds),
            objectives: scenario.objectives.clone(),
            feasible_output: scenario.feasible_output.clone(),
        }),
    })
}

/// Evaluates a batch and tags the records.
pub fn evaluate_records(
    evaluator: &dyn Evaluator,
    space: &DesignSpace,
    batch: &[Configuration],
    objectives: usize,
    iteration: i64,
) -> Result<Vec<EvaluationRecord>> {
    let outcomes = evaluator.evaluate(space, batch)?;
    if outcomes.len() != batch.len() {
        return Err(Error::Protocol(format!(
            "{} outcomes for {} configurations",
            outcomes.len(),
            batch.len()
        )));
    }
    batch
        .iter()
        .zip(outcomes)
        .map(|(c, o)| {
            if o.objectives.len() != objectives {
                return Err(Error::Protocol(format!(
                    "evaluator returned {} objectives, scenario declares {objectives}",
                    o.objectives.len()
                )));
            }
            Ok(EvaluationRecord {
                config: c.clone(),
                objectives: o.objectives,
                feasible: o.feasible,
                iteration,
            })
        })
        .collect()
}

/// Exhaustive search: every configuration evaluated, with the constrained
/// front (indices into the records).
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub records: Vec<EvaluationRecord>,
    pub front: Vec<usize>,
}

impl BruteForce {
    pub fn front_records(&self) -> Vec<&EvaluationRecord> {
        self.front.iter().map(|&i| &self.records[i]).collect()
    }
}

pub fn brute_force_front(space: &DesignSpace, evaluator: &dyn Evaluator, objectives: usize) -> Result<BruteForce> {
    let all: Vec<Configuration> = enumerate_space(space, DEFAULT_ENUMERATION_CAP)?.collect();
    let records = evaluate_records(evaluator, space, &all, objectives, WARMUP_TAG)?;
    let front = constrained_front(&records);
    Ok(BruteForce { records, front })
}

/// Pass-through double: every configuration gets the same fixed outcome.
#[derive(Debug, Clone)]
pub struct FixedEvaluator(pub Outcome);

impl Evaluator for FixedEvaluator {
    fn evaluate(&self, _space: &DesignSpace, batch: &[Configuration]) -> Result<Vec<Outcome>> {
        Ok(vec![self.0.clone(); batch.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (DesignSpace, BuiltinEvaluator) {
        let space = toy_fpga_space();
        let objectives = vec!["cycles".to_string(), "logic".to_string()];
        let feas = FeasibleOutput {
            name: "valid".into(),
            true_value: "true".into(),
        };
        let e = BuiltinEvaluator::new("toy_fpga", &space, &objectives, Some(&feas)).unwrap();
        (space, e)
    }

    #[test]
    fn toy_fpga_formulas() {
        let a = toy_fpga(2, 1, true, 1).unwrap();
        assert_eq!((a.cycles, a.logic, a.feasible), (4160.0, 24.0, true));
        let b = toy_fpga(64, 16, true, 1).unwrap();
        assert_eq!(b.logic, 471.0);
        assert!(!b.feasible);
        // ceil(4096/2) * ceil(2/1) * 2 + 64
        let c = toy_fpga(2, 1, false, 1).unwrap();
        assert_eq!((c.cycles, c.logic, c.feasible), (8256.0, 18.0, true));
        assert!(matches!(toy_fpga(3, 1, true, 1), Err(Error::Domain(_))));
        assert!(toy_fpga(2, 1, true, 5).is_err());
    }

    #[test]
    fn builtin_reads_named_parameters() {
        let (space, e) = toy();
        let c = space
            .config_from_pairs(&[("T", "2"), ("P", "1"), ("S", "true"), ("B", "1")])
            .unwrap();
        let out = e.evaluate(&space, &[c.clone(), c]).unwrap();
        assert_eq!(
            out[0],
            Outcome {
                objectives: vec![4160.0, 24.0],
                feasible: true
            }
        );
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn builtin_objective_mismatch_is_a_protocol_error() {
        let space = toy_fpga_space();
        let err = BuiltinEvaluator::new("toy_fpga", &space, &["power".to_string()], None)
            .err()
            .unwrap();
        assert!(matches!(err, Error::Protocol(_)));
        let other = blackscholes_like_space();
        assert!(BuiltinEvaluator::new("toy_fpga", &other, &["cycles".to_string()], None).is_err());
    }

    #[test]
    fn brute_force_toy_fpga() {
        let (space, e) = toy();
        let bf = brute_force_front(&space, &e, 2).unwrap();
        assert_eq!(bf.records.len(), 240);
        let front = bf.front_records();
        assert!(!front.is_empty());
        assert!(front.iter().all(|r| r.feasible));
        let feasible = bf.records.iter().filter(|r| r.feasible).count();
        assert!(feasible > 0 && feasible < 240);
    }

    #[test]
    fn brute_force_degenerate_spaces() {
        let space = DesignSpace::new(vec![Parameter::integer("x", 0, 3).unwrap()]).unwrap();
        let bad = FixedEvaluator(Outcome {
            objectives: vec![1.0],
            feasible: false,
        });
        let bf = brute_force_front(&space, &bad, 1).unwrap();
        assert_eq!(bf.records.len(), 4);
        assert!(bf.front.is_empty());

        let one = DesignSpace::new(vec![Parameter::integer("x", 2, 2).unwrap()]).unwrap();
        let good = FixedEvaluator(Outcome {
            objectives: vec![1.0],
            feasible: true,
        });
        assert_eq!(brute_force_front(&one, &good, 1).unwrap().front, vec![0]);

        let real = DesignSpace::new(vec![Parameter::real("r", 0.0, 1.0).unwrap()]).unwrap();
        assert!(brute_force_front(&real, &good, 1).is_err());
    }

    #[test]
    fn fixed_double_passes_values_through() {
        let space = toy_fpga_space();
        let e = FixedEvaluator(Outcome {
            objectives: vec![3.5, -1.0],
            feasible: true,
        });
        let c = space
            .config_from_pairs(&[("T", "4"), ("P", "2"), ("S", "false"), ("B", "3")])
            .unwrap();
        let recs = evaluate_records(&e, &space, std::slice::from_ref(&c), 2, 0).unwrap();
        assert_eq!(recs[0].objectives, vec![3.5, -1.0]);
        assert_eq!(recs[0].config, c);
        assert!(evaluate_records(&e, &space, &[c], 3, 0).is_err());
    }

    fn subprocess(objectives: &[&str]) -> SubprocessEvaluator {
        SubprocessEvaluator {
            command: vec!["true".into()],
            working_dir: None,
            timeout: Duration::from_secs(5),
            objectives: objectives.iter().map(|s| s.to_string()).collect(),
            feasible_output: Some(FeasibleOutput {
                name: "valid".into(),
                true_value: "True".into(),
            }),
        }
    }

    #[test]
    fn request_and_response_join_by_parameters() {
        let space = toy_fpga_space();
        let a = space
            .config_from_pairs(&[("T", "2"), ("P", "1"), ("S", "true"), ("B", "1")])
            .unwrap();
        let b = space
            .config_from_pairs(&[("T", "64"), ("P", "16"), ("S", "false"), ("B", "4")])
            .unwrap();
        let req = SubprocessEvaluator::request_csv(&space, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(req, "T,P,S,B\n2,1,true,1\n64,16,false,4\n");

        let e = subprocess(&["cycles", "logic"]);
        // Out of order, extra column, non-canonical numerals.
        let body = "B,S,P,T,logic,cycles,valid,extra\n4,false,16.0,64,300,100,False,x\n1,true,1,2,24,4160,True,y\n";
        let out = e.parse_response(&space, &[a.clone(), b.clone()], body).unwrap();
        assert_eq!(
            out[0],
            Outcome {
                objectives: vec![4160.0, 24.0],
                feasible: true
            }
        );
        assert_eq!(
            out[1],
            Outcome {
                objectives: vec![100.0, 300.0],
                feasible: false
            }
        );

        let missing = "T,P,S,B,cycles,logic,valid\n2,1,true,1,4160,24,True\n";
        let err = e.parse_response(&space, &[a.clone(), b.clone()], missing).unwrap_err();
        assert!(err.to_string().contains("missing configuration 64,16,false,4"), "{err}");

        let twice = "T,P,S,B,cycles,logic,valid\n2,1,true,1,1,1,True\n2,1,true,1,1,1,True\n";
        assert!(e.parse_response(&space, std::slice::from_ref(&a), twice).is_err());

        let nan = "T,P,S,B,cycles,logic,valid\n2,1,true,1,abc,1,True\n";
        assert!(e.parse_response(&space, std::slice::from_ref(&a), nan).is_err());

        let no_col = "T,P,S,B,cycles,valid\n2,1,true,1,1,True\n";
        assert!(e.parse_response(&space, &[a], no_col).is_err());
    }
}
