#![allow(dead_code)]

use std::path::PathBuf;

use dse_core::{parse_scenario, Scenario};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn toy_scenario(extra: &str) -> Scenario {
    let text = format!(
        r#"{{
        "application_name": "toy",
        "optimization_objectives": ["cycles", "logic"],
        "feasible_output": {{"name": "valid", "true_value": "true"}},
        "input_parameters": {{
            "T": {{"parameter_type": "ordinal", "values": [2, 4, 8, 16, 32, 64], "prior": "decay"}},
            "P": {{"parameter_type": "ordinal", "values": [1, 2, 4, 8, 16], "prior": "decay"}},
            "S": {{"parameter_type": "categorical", "values": ["true", "false"]}},
            "B": {{"parameter_type": "integer", "values": [1, 4]}}
        }},
        "design_of_experiment": {{"number_of_samples": 30}},
        "optimization_iterations": 5,
        "evaluations_per_optimization_iteration": 20,
        {extra}
        "evaluator": {{"builtin": "toy_fpga"}}
    }}"#
    );
    parse_scenario(&text).unwrap()
}
