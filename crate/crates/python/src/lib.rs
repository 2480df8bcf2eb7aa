use std::path::PathBuf;
use std::sync::Arc;

use ddpgd::bench::{cmd_compare, cmd_offline, cmd_online, BenchmarkConfig, Scale};
use ddpgd::param_grid::ParamPoint;
use ddpgd::reference::analytic_test1;
use ddpgd::subdomain::SurrogateModel;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: ddpgd::Error) -> PyErr {
    match e {
        ddpgd::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (ddpgd::Error::Config(_)
        | ddpgd::Error::OutOfRange { .. }
        | ddpgd::Error::MissingAxis(_)
        | ddpgd::Error::InvalidAxis { .. }
        | ddpgd::Error::DimensionMismatch(_)
        | ddpgd::Error::Toml(_)) => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn scale(s: &str) -> PyResult<Scale> {
    match s {
        "desk" => Ok(Scale::Desk),
        "paper" => Ok(Scale::Paper),
        other => Err(PyValueError::new_err(format!("unknown scale `{other}`, expected `desk` or `paper`"))),
    }
}

/// Build and store the surrogates of a benchmark configuration.
///
/// Returns `(id, subproblems, raw modes, compressed modes)` per reference subdomain.
#[pyfunction]
#[pyo3(signature = (config, out, scale="desk", workers=1))]
fn offline(
    py: Python<'_>,
    config: PathBuf,
    out: PathBuf,
    scale: &str,
    workers: usize,
) -> PyResult<Vec<(String, usize, usize, usize)>> {
    let sc = self::scale(scale)?;
    std::fs::create_dir_all(&out)?;
    let summary = py.detach(|| cmd_offline(&config, sc, &out, workers.max(1))).map_err(to_py)?;
    Ok(summary
        .models
        .into_iter()
        .map(|m| (m.id, m.subproblems, m.raw_modes, m.compressed_modes))
        .collect())
}

fn points(config: &PathBuf, mu: Option<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let Some(mu) = mu else { return Ok(Vec::new()) };
    let cfg = BenchmarkConfig::load(config).map_err(to_py)?;
    for p in &mu {
        cfg.check_point(p).map_err(to_py)?;
    }
    Ok(mu)
}

/// Online DD-PGD solves at the given points (configuration defaults when omitted).
#[pyfunction]
#[pyo3(signature = (config, out, mu=None, scale="desk"))]
fn online<'py>(
    py: Python<'py>,
    config: PathBuf,
    out: PathBuf,
    mu: Option<Vec<Vec<f64>>>,
    scale: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sc = self::scale(scale)?;
    let pts = points(&config, mu)?;
    let runs = py.detach(|| cmd_online(&config, sc, &out, &pts)).map_err(to_py)?;
    runs.into_iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("mu", s.mu)?;
            d.set_item("unknowns", s.unknowns)?;
            d.set_item("iterations", s.iterations)?;
            d.set_item("converged", s.converged)?;
            d.set_item("final_residual", s.final_residual)?;
            d.set_item("overlap_mismatch", s.overlap_mismatch)?;
            d.set_item("clamp_events", s.clamp_events)?;
            d.set_item("error", s.error)?;
            Ok(d)
        })
        .collect()
}

/// DD-PGD against DD-FEM and monolithic FEM; writes `compare.csv` under `out`.
#[pyfunction]
#[pyo3(signature = (config, out, mu=None, seed=None, scale="desk"))]
fn compare<'py>(
    py: Python<'py>,
    config: PathBuf,
    out: PathBuf,
    mu: Option<Vec<Vec<f64>>>,
    seed: Option<u64>,
    scale: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sc = self::scale(scale)?;
    let pts = points(&config, mu)?;
    let rows = py.detach(|| cmd_compare(&config, sc, &out, &pts, seed)).map_err(to_py)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("mu", r.mu)?;
            d.set_item("pgd_error", r.pgd_error)?;
            d.set_item("ddfem_error", r.ddfem_error)?;
            d.set_item("monolithic_error", r.monolithic_error)?;
            d.set_item("pgd_vs_ddfem", r.pgd_vs_ddfem)?;
            d.set_item("pgd_iterations", r.pgd_iterations)?;
            d.set_item("ddfem_iterations", r.ddfem_iterations)?;
            d.set_item("pgd_seconds", r.pgd_seconds)?;
            d.set_item("ddfem_seconds", r.ddfem_seconds)?;
            Ok(d)
        })
        .collect()
}

/// Closed-form solution of the diffusion benchmark.
#[pyfunction]
fn exact_test1(mu: f64, x: f64, y: f64) -> f64 {
    analytic_test1(mu, x, y)
}

/// A stored local surrogate model.
#[pyclass(frozen)]
struct Surrogate {
    model: Arc<SurrogateModel>,
}

#[pymethods]
impl Surrogate {
    /// Load model `id` from a `surrogates/` directory written by `offline`.
    #[staticmethod]
    fn load(dir: PathBuf, id: &str) -> PyResult<Self> {
        let model = SurrogateModel::load(&dir, id).map_err(to_py)?;
        Ok(Self { model: Arc::new(model) })
    }

    #[getter]
    fn id(&self) -> String {
        self.model.id.clone()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.model.n_nodes
    }

    #[getter]
    fn interface_dofs(&self) -> Vec<usize> {
        self.model.interface_dofs.clone()
    }

    /// Names of the physical parameter axes, in order.
    #[getter]
    fn mu_axes(&self) -> Vec<String> {
        self.model.mu_axes.iter().map(|a| a.name().to_string()).collect()
    }

    #[getter]
    fn compressed_modes(&self) -> usize {
        self.model.compressed_modes()
    }

    /// Nodal field at physical parameters `mu` and one value per interface DOF.
    fn evaluate(&self, py: Python<'_>, mu: Vec<f64>, lam: Vec<f64>) -> PyResult<Vec<f64>> {
        if mu.len() != self.model.mu_axes.len() {
            return Err(PyValueError::new_err(format!(
                "expected {} physical parameters, got {}",
                self.model.mu_axes.len(),
                mu.len()
            )));
        }
        let mut p = ParamPoint::new();
        for (a, v) in self.model.mu_axes.iter().zip(mu) {
            p.set(a.name(), v);
        }
        let m = self.model.clone();
        py.detach(move || m.evaluate(&p, &lam)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Surrogate(id={:?}, nodes={}, interface_dofs={}, modes={})",
            self.model.id,
            self.model.n_nodes,
            self.model.interface_dofs.len(),
            self.model.compressed_modes()
        )
    }
}

#[pymodule]
fn ddpgd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(offline, m)?)?;
    m.add_function(wrap_pyfunction!(online, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(exact_test1, m)?)?;
    m.add_class::<Surrogate>()?;
    Ok(())
}
