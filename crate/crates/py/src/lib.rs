//! Python module `chainrec`: thin wrappers over the pipeline taking a JSON
//! run configuration.

use std::path::PathBuf;

use chainrec_core::chaingraph::{cr_approx, ApproxMode};
use chainrec_core::config::RunConfig;
use chainrec_core::pipeline::{self, ConleyOptions};
use chainrec_core::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse(config_json: &str) -> PyResult<RunConfig> {
    RunConfig::from_json(config_json).map_err(py_err)
}

/// SHA-256 of the canonical configuration (workers and output_dir excluded).
#[pyfunction]
fn config_hash(config_json: &str) -> PyResult<String> {
    Ok(parse(config_json)?.hash())
}

/// JSON of the built-in z², z³ example on an `n × n` grid.
#[pyfunction]
fn zn_preset(n: usize) -> String {
    RunConfig::zn_preset(n).to_json()
}

/// Multi-indices of the chain recurrent cells (`mode` is "outer" or "inner").
#[pyfunction]
#[pyo3(signature = (config_json, mode = "outer"))]
fn chain_recurrent_cells(py: Python<'_>, config_json: &str, mode: &str) -> PyResult<Vec<Vec<usize>>> {
    let cfg = parse(config_json)?;
    let mode = match mode {
        "outer" => ApproxMode::Outer,
        "inner" => ApproxMode::Inner,
        m => return Err(PyValueError::new_err(format!("mode must be outer or inner, got {m:?}"))),
    };
    py.detach(|| {
        let sys = cfg.build()?;
        let a = cr_approx(&sys.grid, &sys.sg, &sys.eps, &sys.g_list, cfg.connector_max_len, mode, cfg.enclosure, &cfg.budget)?;
        let mut cells = a.cells.multi_indices();
        cells.sort();
        Ok(cells)
    })
    .map_err(py_err)
}

/// Writes the CR outputs; returns the cell counts per computed mode.
#[pyfunction]
fn run_cr(py: Python<'_>, config_json: &str, out_dir: PathBuf) -> PyResult<Vec<(String, usize)>> {
    let cfg = parse(config_json)?;
    let run = py.detach(|| pipeline::with_workers(cfg.workers, || pipeline::run_cr(&cfg, &out_dir))?).map_err(py_err)?;
    Ok([&run.outer, &run.inner].into_iter().flatten().map(|a| (a.meta.mode.to_string(), a.cells.len())).collect())
}

/// Runs the full pipeline; returns the verdict name and its exit code.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir, corrupt_record = false))]
fn run_conley(py: Python<'_>, config_json: &str, out_dir: PathBuf, corrupt_record: bool) -> PyResult<(String, i32)> {
    let cfg = parse(config_json)?;
    let opts = ConleyOptions { corrupt_record };
    let run = py
        .detach(|| pipeline::with_workers(cfg.workers, || pipeline::run_conley(&cfg, &out_dir, opts))?)
        .map_err(py_err)?;
    let v = run.verdict();
    let name = serde_json::to_value(v).ok().and_then(|j| j.as_str().map(String::from)).unwrap_or_default();
    Ok((name, v.exit_code()))
}

/// Witness chain as text, or `None` when no chain exists.
#[pyfunction]
fn find_chain(py: Python<'_>, config_json: &str, out_dir: PathBuf, from: Vec<f64>, to: Vec<f64>) -> PyResult<Option<String>> {
    let cfg = parse(config_json)?;
    let w = py
        .detach(|| pipeline::with_workers(cfg.workers, || pipeline::run_chain(&cfg, &out_dir, &from, &to))?)
        .map_err(py_err)?;
    Ok(w.map(|w| w.to_string()))
}

#[pymodule]
fn chainrec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(zn_preset, m)?)?;
    m.add_function(wrap_pyfunction!(chain_recurrent_cells, m)?)?;
    m.add_function(wrap_pyfunction!(run_cr, m)?)?;
    m.add_function(wrap_pyfunction!(run_conley, m)?)?;
    m.add_function(wrap_pyfunction!(find_chain, m)?)?;
    Ok(())
}
