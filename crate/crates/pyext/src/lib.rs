//! Python bindings for the scenario laboratory.
//!
//! The module mirrors the command-line surface: scenario registry, full runs,
//! single-point reductions, and the bracket axiom survey. Reports cross the
//! boundary as JSON strings so the Python side works with plain dictionaries
//! and stays byte-compatible with reports written by the CLI.

use courantlab::calculus::pairing_matrix;
use courantlab::reduction::Tolerances;
use courantlab::scenarios::{self, build_scenario, scenario_names, RunConfig, ORACLE_TOL};
use courantlab::structures;
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py_err(e: courantlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

fn tolerances_from(
    rank_tol: Option<f64>,
    angle_tol: Option<f64>,
    level_tol: Option<f64>,
    residual_tol: Option<f64>,
) -> Tolerances {
    let mut t = Tolerances::default();
    if let Some(v) = rank_tol {
        t.rank_tol = v;
    }
    if let Some(v) = angle_tol {
        t.angle_tol = v;
    }
    if let Some(v) = level_tol {
        t.level_tol = v;
    }
    if let Some(v) = residual_tol {
        t.residual_tol = v;
    }
    t
}

/// (name, summary) pairs for every built-in scenario.
#[pyfunction]
fn list_scenarios() -> Vec<(String, String)> {
    scenario_names()
        .into_iter()
        .map(|(n, s)| (n.to_string(), s.to_string()))
        .collect()
}

/// Runs a scenario and returns the full JSON report.
#[pyfunction]
#[pyo3(signature = (name, *, samples=8, seed=17, jobs=0, rank_tol=None, angle_tol=None, level_tol=None, residual_tol=None))]
#[allow(clippy::too_many_arguments)]
fn run_scenario(
    name: &str,
    samples: usize,
    seed: u64,
    jobs: usize,
    rank_tol: Option<f64>,
    angle_tol: Option<f64>,
    level_tol: Option<f64>,
    residual_tol: Option<f64>,
) -> PyResult<String> {
    let scenario = build_scenario(name).map_err(to_py_err)?;
    let cfg = RunConfig {
        samples,
        seed,
        jobs,
        tolerances: tolerances_from(rank_tol, angle_tol, level_tol, residual_tol),
    };
    let report = scenarios::run_scenario(&scenario, &cfg).map_err(to_py_err)?;
    Ok(report.to_json_pretty())
}

/// Reduces a scenario at one chart point and returns the JSON point report.
/// With `project=True` the point is first moved onto the zero level set.
#[pyfunction]
#[pyo3(signature = (name, point, *, project=true))]
fn reduce_at_point(name: &str, point: Vec<f64>, project: bool) -> PyResult<String> {
    let scenario = build_scenario(name).map_err(to_py_err)?;
    if point.len() != scenario.m {
        return Err(PyValueError::new_err(format!(
            "scenario '{name}' lives on {} coordinates, got {}",
            scenario.m,
            point.len()
        )));
    }
    let tols = Tolerances::default();
    let p = if project {
        scenario
            .data
            .project_to_level(&point, &tols, 80)
            .map_err(to_py_err)?
    } else {
        point
    };
    let report = scenarios::evaluate_point(&scenario, &p, &tols).map_err(to_py_err)?;
    let mut json =
        serde_json::to_string_pretty(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json.push('\n');
    Ok(json)
}

/// Surveys the bracket axioms on random polynomial sections and returns the
/// JSON report.
#[pyfunction]
#[pyo3(signature = (*, dim=4, samples=50, seed=17))]
fn axioms_survey(dim: usize, samples: usize, seed: u64) -> PyResult<String> {
    let report = scenarios::axioms_survey(dim, samples, seed).map_err(to_py_err)?;
    Ok(report.to_json_pretty())
}

/// The symmetric pairing of the split fiber on an m-dimensional chart, as a
/// 2m-by-2m row-major matrix.
#[pyfunction]
fn split_pairing(m: usize) -> Vec<Vec<f64>> {
    matrix_rows(&pairing_matrix(m))
}

/// The block-rotation complex structure matrix on an even-dimensional chart.
#[pyfunction]
fn complex_structure_matrix(m: usize) -> PyResult<Vec<Vec<f64>>> {
    if m == 0 || m % 2 != 0 {
        return Err(PyValueError::new_err(format!(
            "a complex structure needs a positive even dimension, got {m}"
        )));
    }
    Ok(matrix_rows(&structures::standard_complex_matrix(m)))
}

/// Registers every binding on the given module; shared between the Python
/// entry point and the embedded-interpreter tests.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_at_point, m)?)?;
    m.add_function(wrap_pyfunction!(axioms_survey, m)?)?;
    m.add_function(wrap_pyfunction!(split_pairing, m)?)?;
    m.add_function(wrap_pyfunction!(complex_structure_matrix, m)?)?;
    m.add("ORACLE_TOL", ORACLE_TOL)?;
    m.add("SCHEMA_VERSION", courantlab::report::SCHEMA_VERSION)?;
    Ok(())
}

#[pymodule]
fn courantlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
