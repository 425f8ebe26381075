//! Python module `pywhslab`.

pub mod api;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

create_exception!(pywhslab, WhslabError, PyException, "Failure inside whslab.");

fn err(e: whslab::Error) -> PyErr {
    WhslabError::new_err(format!("{}: {e}", e.name()))
}

/// JSON value to the matching Python builtin.
pub fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => py.None().into_bound(py),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, x) in o {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn field(name: &str, params: Vec<f64>, dim: usize) -> PyResult<whslab::ScalarField> {
    api::field(name, &params, dim).map_err(err)
}

/// `(eigenvalue, multiplicity)` pairs of the model Laplacian.
#[pyfunction]
#[pyo3(signature = (n, k, q, t, count = 5))]
fn oscillator_spectrum(
    n: usize,
    k: usize,
    q: usize,
    t: f64,
    count: usize,
) -> PyResult<Vec<(f64, u64)>> {
    api::oscillator(n, k, q, t, count).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (field_name, params = vec![], dim = 1))]
fn critical_points<'py>(
    py: Python<'py>,
    field_name: &str,
    params: Vec<f64>,
    dim: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let h = field(field_name, params, dim)?;
    to_py(py, &api::critical_points(&h).map_err(err)?)
}

/// Generators, incidence matrices, Betti numbers and the inequality table.
#[pyfunction]
#[pyo3(signature = (field_name, params = vec![], dim = 1))]
fn morse_complex<'py>(
    py: Python<'py>,
    field_name: &str,
    params: Vec<f64>,
    dim: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let h = field(field_name, params, dim)?;
    let v = py.detach(|| api::morse_complex(&h)).map_err(err)?;
    to_py(py, &v)
}

/// Small cluster of the deformed Laplacian. `field_name = None` leaves only the
/// harmonic part.
#[pyfunction]
#[pyo3(signature = (field_name, q, t, params = vec![], dim = 1, harmonic = vec![], grid = None))]
#[allow(clippy::too_many_arguments)]
fn small_spectrum<'py>(
    py: Python<'py>,
    field_name: Option<&str>,
    q: usize,
    t: f64,
    params: Vec<f64>,
    dim: usize,
    harmonic: Vec<f64>,
    grid: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let h = field_name.map(|f| field(f, params, dim)).transpose()?;
    let v = py
        .detach(|| api::small_spectrum(h.as_ref(), harmonic, dim, q, t, grid))
        .map_err(err)?;
    to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (field_name, t_grid, q = 0, params = vec![], dim = 1, grid = None))]
fn gap_sweep<'py>(
    py: Python<'py>,
    field_name: &str,
    t_grid: Vec<f64>,
    q: usize,
    params: Vec<f64>,
    dim: usize,
    grid: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let h = field(field_name, params, dim)?;
    let v = py
        .detach(|| api::gap_sweep(&h, q, &t_grid, grid))
        .map_err(err)?;
    to_py(py, &v)
}

/// Per-`t` bundles with the deviation of `L(t)R(t)` from the identity.
#[pyfunction]
#[pyo3(signature = (field_name, t_grid, params = vec![], dim = 1, convention = "pi-over-t", grid = None))]
fn whs_compare<'py>(
    py: Python<'py>,
    field_name: &str,
    t_grid: Vec<f64>,
    params: Vec<f64>,
    dim: usize,
    convention: &str,
    grid: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let h = field(field_name, params, dim)?;
    let v = py
        .detach(|| api::whs_compare(&h, &t_grid, convention, grid))
        .map_err(err)?;
    to_py(py, &v)
}

/// Runs a CLI command; returns `(exit_code, report)`.
#[pyfunction]
#[pyo3(signature = (command, settings = None))]
fn run<'py>(
    py: Python<'py>,
    command: &str,
    settings: Option<std::collections::BTreeMap<String, String>>,
) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let pairs: Vec<(String, String)> = settings.unwrap_or_default().into_iter().collect();
    let (code, report) = py.detach(|| api::run(command, &pairs)).map_err(err)?;
    Ok((code, to_py(py, &report)?))
}

#[pymodule]
fn pywhslab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WhslabError", m.py().get_type::<WhslabError>())?;
    m.add_function(wrap_pyfunction!(oscillator_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(critical_points, m)?)?;
    m.add_function(wrap_pyfunction!(morse_complex, m)?)?;
    m.add_function(wrap_pyfunction!(small_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(gap_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(whs_compare, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
