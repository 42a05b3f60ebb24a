//! `dse`: run an exploration, build an exhaustive reference, compare runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use dse_core::evaluator::{brute_force_front, evaluator_for};
use dse_core::pareto::{hvi, pareto_front, Normalization};
use dse_core::report::{
    load_reference, parse_reference, render_run, report_csv, samples_csv, summarize, write_partial, ReferenceSet,
    ALL_POINTS_FILE, META_FILE, SAMPLES_FILE, TRUE_FRONT_FILE,
};
use dse_core::scenario::{apply_override, parse_json, scenario_from_json};
use dse_core::Scenario;

#[derive(Parser)]
#[command(
    name = "dse",
    version,
    about = "Constrained multi-objective design space exploration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the exploration described by a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a scenario field, e.g. `--set optimization_iterations=0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Sample table whose feasible front is the HVI reference.
        #[arg(long)]
        reference_front: Option<PathBuf>,
    },
    /// Evaluate every configuration of a finite space.
    BruteForce {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Final HVI of each run with mean and 80% confidence half-width.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long)]
        reference_front: Option<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            overrides,
            reference_front,
        } => cmd_run(&scenario, seed, &overrides, reference_front.as_deref()),
        Command::BruteForce { scenario, overrides } => cmd_brute_force(&scenario, &overrides),
        Command::Report {
            run_dirs,
            reference_front,
            output,
        } => cmd_report(&run_dirs, reference_front.as_deref(), &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

/// One JSON object on stderr, then exit status 1.
fn fail(e: &anyhow::Error) -> ExitCode {
    let core = e.chain().find_map(|c| c.downcast_ref::<dse_core::Error>());
    let mut line = json!({
        "error": match core {
            Some(c) => c.kind(),
            None if e.chain().any(|c| c.is::<std::io::Error>()) => "io",
            None => "cli",
        },
        "message": format!("{e:#}"),
    });
    if let Some(dse_core::Error::Evaluation { raw_output, .. }) = core {
        line["raw_output"] = json!(raw_output);
    }
    eprintln!("{line}");
    ExitCode::FAILURE
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("DSE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("DSE_THREADS must be a non-negative integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_scenario(path: &Path, overrides: &[String], seed: Option<u64>) -> anyhow::Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut doc = parse_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(seed) = seed {
        doc["seed"] = json!(seed);
    }
    Ok(scenario_from_json(&doc)?)
}

fn scenario_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, overrides: &[String], reference: Option<&Path>) -> anyhow::Result<()> {
    let scenario = load_scenario(path, overrides, seed)?;
    let reference = reference
        .map(|r| load_reference(r, &scenario.objectives).with_context(|| format!("reading {}", r.display())))
        .transpose()?;
    let evaluator = evaluator_for(&scenario, &scenario_dir(path))?;
    let out_dir = &scenario.output_dir;
    let outcome = match dse_core::run(&scenario, evaluator.as_ref()) {
        Ok(o) => o,
        Err(failure) => {
            write_partial(out_dir, &scenario, failure.archive.records())?;
            return Err(anyhow::Error::new(failure.error)
                .context(format!("run aborted; partial samples in {}", out_dir.display())));
        }
    };
    render_run(&scenario, &outcome, reference.as_ref())?.write(out_dir)?;
    if outcome.archive.front_indices().is_empty() {
        eprintln!("warning: no feasible point found");
    }
    println!(
        "{} evaluations, {} front points -> {}",
        outcome.archive.len(),
        outcome.archive.front_indices().len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_brute_force(path: &Path, overrides: &[String]) -> anyhow::Result<()> {
    let scenario = load_scenario(path, overrides, None)?;
    let evaluator = evaluator_for(&scenario, &scenario_dir(path))?;
    let bf = brute_force_front(&scenario.space, evaluator.as_ref(), scenario.objective_count())?;
    let out_dir = &scenario.output_dir;
    fs::create_dir_all(out_dir)?;
    fs::write(
        out_dir.join(ALL_POINTS_FILE),
        samples_csv(&scenario.space, &scenario.objectives, &bf.records)?,
    )?;
    fs::write(
        out_dir.join(TRUE_FRONT_FILE),
        samples_csv(&scenario.space, &scenario.objectives, bf.front_records())?,
    )?;
    println!(
        "{} points, {} on the front -> {}",
        bf.records.len(),
        bf.front.len(),
        out_dir.display()
    );
    Ok(())
}

fn run_objectives(dir: &Path) -> anyhow::Result<Vec<String>> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let meta = parse_json(&text)?;
    let list = meta["objectives"]
        .as_array()
        .with_context(|| format!("{} has no objectives list", path.display()))?;
    list.iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .context("objective names must be strings")
        })
        .collect()
}

fn cmd_report(dirs: &[PathBuf], reference: Option<&Path>, output: &Path) -> anyhow::Result<()> {
    let objectives = run_objectives(&dirs[0])?;
    let mut runs: Vec<(String, ReferenceSet)> = Vec::new();
    for dir in dirs {
        let these = run_objectives(dir)?;
        if these != objectives {
            bail!(
                "{} optimizes {:?} but {} optimizes {:?}",
                dir.display(),
                these,
                dirs[0].display(),
                objectives
            );
        }
        let text = fs::read_to_string(dir.join(SAMPLES_FILE))
            .with_context(|| format!("reading {}", dir.join(SAMPLES_FILE).display()))?;
        runs.push((dir.display().to_string(), parse_reference(&text, &objectives)?));
    }
    let supplied = reference.map(|r| load_reference(r, &objectives)).transpose()?;
    let reference_front: Vec<Vec<f64>> = match &supplied {
        Some(r) => r.front.clone(),
        None => {
            let union: Vec<Vec<f64>> = runs.iter().flat_map(|(_, r)| r.front.iter().cloned()).collect();
            pareto_front(&union).into_iter().map(|i| union[i].clone()).collect()
        }
    };
    if reference_front.is_empty() {
        bail!("reference front is empty: no feasible point in any run");
    }
    let mut sample: Vec<&[f64]> = runs
        .iter()
        .flat_map(|(_, r)| r.points.iter().map(Vec::as_slice))
        .collect();
    if let Some(r) = &supplied {
        sample.extend(r.points.iter().map(Vec::as_slice));
    }
    let norm = Normalization::from_points(&sample)?;
    let values = runs
        .iter()
        .map(|(name, r)| Ok((name.clone(), hvi(&r.front, &reference_front, &norm)?)))
        .collect::<dse_core::Result<Vec<(String, f64)>>>()?;
    let just: Vec<f64> = values.iter().map(|v| v.1).collect();
    let table = report_csv(&values, &summarize(&just)?)?;
    fs::write(output, &table).with_context(|| format!("writing {}", output.display()))?;
    print!("{table}");
    Ok(())
}
