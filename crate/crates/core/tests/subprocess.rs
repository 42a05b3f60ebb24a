mod common;

use std::time::{Duration, Instant};

use dse_core::evaluator::{evaluate_records, toy_fpga_space, BuiltinEvaluator, SubprocessEvaluator};
use dse_core::scenario::FeasibleOutput;
use dse_core::space::enumerate_space;
use dse_core::{Error, Evaluator};

fn objectives() -> Vec<String> {
    vec!["cycles".into(), "logic".into()]
}

fn feasible() -> Option<FeasibleOutput> {
    Some(FeasibleOutput {
        name: "valid".into(),
        true_value: "true".into(),
    })
}

fn script(name: &str, args: &[&str]) -> SubprocessEvaluator {
    let mut command = vec!["python3".to_string(), common::fixture(name).display().to_string()];
    command.extend(args.iter().map(|s| s.to_string()));
    SubprocessEvaluator {
        command,
        working_dir: None,
        timeout: Duration::from_secs(30),
        objectives: objectives(),
        feasible_output: feasible(),
    }
}

#[test]
fn echo_script_passes_fixed_values_through() {
    let space = toy_fpga_space();
    let batch: Vec<_> = enumerate_space(&space, 1000).unwrap().take(17).collect();
    let recs = evaluate_records(&script("echo_eval.py", &[]), &space, &batch, 2, 4).unwrap();
    assert_eq!(recs.len(), 17);
    for (r, c) in recs.iter().zip(&batch) {
        assert_eq!(&r.config, c);
        assert_eq!(r.objectives, vec![7.0, 3.5]);
        assert!(r.feasible);
        assert_eq!(r.iteration, 4);
    }
}

#[test]
fn external_toy_fpga_matches_builtin_everywhere() {
    let space = toy_fpga_space();
    let all: Vec<_> = enumerate_space(&space, 1000).unwrap().collect();
    let builtin = BuiltinEvaluator::new("toy_fpga", &space, &objectives(), feasible().as_ref()).unwrap();
    let inside = builtin.evaluate(&space, &all).unwrap();
    let outside = script("toy_fpga_eval.py", &[]).evaluate(&space, &all).unwrap();
    assert_eq!(inside, outside);
}

#[test]
fn missing_row_is_named() {
    let space = toy_fpga_space();
    let batch: Vec<_> = enumerate_space(&space, 1000).unwrap().take(3).collect();
    let err = script("toy_fpga_eval.py", &["drop-last"])
        .evaluate(&space, &batch)
        .unwrap_err();
    let last = space.format_config(&batch[2]).join(",");
    match err {
        Error::Evaluation { message, raw_output } => {
            assert!(message.contains(&last), "{message}");
            assert!(raw_output.starts_with("valid,logic,cycles"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn nonzero_exit_carries_child_output() {
    let space = toy_fpga_space();
    let batch: Vec<_> = enumerate_space(&space, 1000).unwrap().take(2).collect();
    match script("toy_fpga_eval.py", &["fail"])
        .evaluate(&space, &batch)
        .unwrap_err()
    {
        Error::Evaluation { message, raw_output } => {
            assert!(message.contains("exit"), "{message}");
            assert!(raw_output.contains("evaluator crashed"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn slow_child_is_killed_at_the_timeout() {
    let space = toy_fpga_space();
    let batch: Vec<_> = enumerate_space(&space, 1000).unwrap().take(1).collect();
    let mut e = script("toy_fpga_eval.py", &["sleep"]);
    e.timeout = Duration::from_millis(300);
    let t = Instant::now();
    let err = e.evaluate(&space, &batch).unwrap_err();
    assert!(t.elapsed() < Duration::from_secs(20));
    assert!(err.to_string().contains("timed out"), "{err}");
}

#[test]
fn missing_program_is_an_evaluation_error() {
    let space = toy_fpga_space();
    let batch: Vec<_> = enumerate_space(&space, 1000).unwrap().take(1).collect();
    let mut e = script("echo_eval.py", &[]);
    e.command = vec!["/nonexistent/evaluator".into()];
    assert!(matches!(e.evaluate(&space, &batch), Err(Error::Evaluation { .. })));
}
