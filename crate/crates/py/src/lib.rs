//! Python bindings: grid facts, truncated exponential inner products, the
//! Itô table layouts and the full scenario runner.

use filtered_fock_core::fock::{ExponentialState, FockBasis};
use filtered_fock_core::grid::GridSpec;
use filtered_fock_core::one_particle::OneParticleVector;
use filtered_fock_core::runner::{ito_table_lines, run, RunOptions};
use filtered_fock_core::scenario::{compile, parse_scenario, Calculus};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn grid_of(horizon: f64, cells: usize, colors: usize, nmax: usize, h0: usize) -> PyResult<GridSpec> {
    GridSpec::new(horizon, cells, colors, nmax, h0).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn vector_of(grid: &GridSpec, entries: Vec<(usize, usize, f64, f64)>) -> PyResult<OneParticleVector> {
    let mut u = OneParticleVector::zero(grid);
    for (cell, color, re, im) in entries {
        u.set(cell, color, Complex64::new(re, im))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    Ok(u)
}

/// Number of Fock basis states of the truncated model.
#[pyfunction]
fn fock_dim(horizon: f64, cells: usize, colors: usize, nmax: usize) -> PyResult<usize> {
    let grid = grid_of(horizon, cells, colors, nmax, 1)?;
    Ok(FockBasis::new(grid).fock_dim())
}

/// Inner product of two truncated exponential vectors, as (re, im).
/// Entries are (cell, 1-based color, re, im) step values.
#[pyfunction]
fn exponential_inner(
    horizon: f64,
    cells: usize,
    colors: usize,
    nmax: usize,
    u: Vec<(usize, usize, f64, f64)>,
    v: Vec<(usize, usize, f64, f64)>,
) -> PyResult<(f64, f64)> {
    let grid = grid_of(horizon, cells, colors, nmax, 1)?;
    let basis = FockBasis::new(grid);
    let xu = ExponentialState::new(vec![Complex64::ONE], vector_of(&grid, u)?);
    let xv = ExponentialState::new(vec![Complex64::ONE], vector_of(&grid, v)?);
    let a = xu.materialize(&basis).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let b = xv.materialize(&basis).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let z = a.inner(&b);
    Ok((z.re, z.im))
}

/// Text dump of a truncated exponential vector: one line per basis state.
#[pyfunction]
fn dump_exponential(
    horizon: f64,
    cells: usize,
    colors: usize,
    nmax: usize,
    u: Vec<(usize, usize, f64, f64)>,
) -> PyResult<String> {
    let grid = grid_of(horizon, cells, colors, nmax, 1)?;
    let basis = FockBasis::new(grid);
    let amps = basis
        .exponential_amplitudes(&vector_of(&grid, u)?)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(basis.dump_fock_vector(&amps))
}

/// The nontrivial Itô table; `calculus` is "boson" or "mfree:m".
#[pyfunction]
fn ito_table(calculus: &str) -> PyResult<String> {
    let parsed = match calculus {
        "boson" => Calculus::Boson,
        other => match other.strip_prefix("mfree:").and_then(|m| m.parse().ok()) {
            Some(m) => Calculus::MFree(m),
            None => return Err(PyValueError::new_err(format!("unknown calculus `{other}`"))),
        },
    };
    Ok(ito_table_lines(&parsed).join("\n"))
}

/// Parse, compile and run a scenario; returns (exit_code, report) with the
/// report in "csv" or "json" format. Exit codes: 0 pass, 1 assertion
/// failure, 2 parse or validation error.
#[pyfunction]
#[pyo3(signature = (text, seed = 0, format = "json"))]
fn run_scenario(text: &str, seed: u64, format: &str) -> PyResult<(i32, String)> {
    let ast = match parse_scenario(text) {
        Ok(a) => a,
        Err(d) => return Ok((2, d.to_string())),
    };
    let compiled = match compile(&ast) {
        Ok(c) => c,
        Err(d) => return Ok((2, d.to_string())),
    };
    let opts = RunOptions { seed, strict: false, threads: 1 };
    let report = run(&compiled, &opts).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let body = match format {
        "csv" => report.to_csv(),
        "json" => report.to_json(),
        other => return Err(PyValueError::new_err(format!("unknown format `{other}`"))),
    };
    Ok((if report.all_pass() { 0 } else { 1 }, body))
}

#[pymodule]
fn filtered_fock(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fock_dim, m)?)?;
    m.add_function(wrap_pyfunction!(exponential_inner, m)?)?;
    m.add_function(wrap_pyfunction!(dump_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(ito_table, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
