//! Python module `ghost_mpm_py`: run scenario configs and evaluate the basis
//! from Python.

use std::path::PathBuf;

use ghost_mpm::config::ScenarioConfig;
use ghost_mpm::output::Output;
use ghost_mpm::{basis, run_scenario, MpmError};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: MpmError) -> PyErr {
    match e {
        MpmError::Config(_) | MpmError::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Run the scenario in `config` and return its summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None, snapshot_stride=None))]
fn run(config: PathBuf, output_dir: Option<PathBuf>, snapshot_stride: Option<usize>) -> PyResult<String> {
    let cfg = ScenarioConfig::load(&config).map_err(to_py)?;
    let dir = output_dir.unwrap_or_else(|| cfg.output.directory.clone());
    let stride = snapshot_stride.unwrap_or(cfg.output.snapshot_stride);
    let out = Output::new(dir, stride, false).map_err(to_py)?;
    let res = run_scenario(&cfg, Some(&out)).map_err(to_py)?;
    serde_json::to_string(&res.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// One-dimensional GIMP basis value and derivative for a point at signed
/// distance `d` from a node, half-length `l`, and grid spacing `h`.
#[pyfunction]
fn gimp_1d(d: f64, l: f64, h: f64) -> PyResult<(f64, f64)> {
    if !(l > 0.0 && h > 0.0 && l <= h) {
        return Err(PyValueError::new_err("require 0 < l <= h"));
    }
    Ok(basis::gimp_1d(d, l, h))
}

/// Validate a TOML config string, returning it re-serialised.
#[pyfunction]
fn check_config(text: &str) -> PyResult<String> {
    Ok(ScenarioConfig::from_toml(text).map_err(to_py)?.to_toml())
}

#[pymodule]
fn ghost_mpm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(gimp_1d, m)?)?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
