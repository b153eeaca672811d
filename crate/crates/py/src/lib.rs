//! Python bindings: networks, temporal simulation, the coarse timestepper,
//! the mean-field map, and whole CLI experiments driven from a config file.

use std::path::PathBuf;
use std::sync::Arc;

use efnet::cli::{commands, ExperimentConfig};
use efnet::coarse::CoarseTimestepper;
use efnet::graph::{self, generate_er};
use efnet::meanfield::{self, MfParams};
use efnet::micro::{run, total_density, MicroState, SimParams};
use efnet::rng::NoiseStream;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: efnet::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Undirected network with degree-class bookkeeping.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    inner: Arc<graph::Network>,
}

#[pymethods]
impl PyNetwork {
    /// G(n, p) with a fixed seed.
    #[staticmethod]
    fn erdos_renyi(n: usize, p: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(generate_er(n, p, seed).map_err(value_err)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, edges, p = 0.0, seed = 0))]
    fn from_edges(n: usize, edges: Vec<(u32, u32)>, p: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(graph::Network::from_edges(n, &edges, p, seed).map_err(value_err)?),
        })
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn mean_degree(&self) -> f64 {
        self.inner.mean_degree()
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<u32>> {
        if i >= self.inner.num_nodes() {
            return Err(PyValueError::new_err(format!("node {i} out of range")));
        }
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.edges()
    }

    fn degree_histogram(&self) -> Vec<(usize, usize)> {
        graph::degree_histogram(&self.inner).into_iter().collect()
    }

    fn mean_clustering(&self) -> f64 {
        graph::mean_clustering(&self.inner).0
    }

    fn giant_component_size(&self) -> usize {
        graph::giant_component_size(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(n={}, edges={}, p={})",
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.connection_probability()
        )
    }
}

/// ρ(t) for `steps` synchronous updates from a random start of density `rho0`.
#[pyfunction]
#[pyo3(signature = (net, eps, steps, rho0 = 1.0, seed = 0))]
fn simulate(py: Python<'_>, net: &PyNetwork, eps: f64, steps: usize, rho0: f64, seed: u64) -> PyResult<Vec<f64>> {
    let params = SimParams::new(eps).map_err(value_err)?;
    let net = net.inner.clone();
    py.detach(move || {
        let n = net.num_nodes();
        let start = MicroState::random(n, rho0, seed);
        let mut noise = NoiseStream::new(seed.wrapping_add(1), n);
        let mut rho = Vec::with_capacity(steps + 1);
        run(&net, &start, params, steps, &mut noise, &mut |_: usize, _: &graph::Network, s: &MicroState| {
            rho.push(total_density(s))
        })
        .map_err(value_err)?;
        Ok(rho)
    })
}

/// Lift → T micro steps → restrict, averaged over `n_copies` realizations.
#[pyclass(name = "CoarseTimestepper", frozen)]
struct PyTimestepper {
    inner: CoarseTimestepper,
}

#[pymethods]
impl PyTimestepper {
    #[new]
    #[pyo3(signature = (net, eps, n_copies = 2000, horizon = 5, master_seed = 1))]
    fn new(net: &PyNetwork, eps: f64, n_copies: usize, horizon: usize, master_seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: CoarseTimestepper::fixed(net.inner.clone(), eps, n_copies, horizon, master_seed).map_err(value_err)?,
        })
    }

    /// Degree of each coarse component.
    fn degrees(&self) -> Vec<usize> {
        self.inner.layout().degrees().to_vec()
    }

    /// |V(k)|/N, the upper bound of each component.
    fn class_fraction(&self) -> Vec<f64> {
        self.inner.layout().class_fraction().to_vec()
    }

    /// Φ_T(d) at the timestepper's ε, or at `eps` when given.
    #[pyo3(signature = (d, eps = None))]
    fn advance(&self, py: Python<'_>, d: Vec<f64>, eps: Option<f64>) -> PyResult<Vec<f64>> {
        let eps = eps.unwrap_or(self.inner.eps());
        py.detach(|| self.inner.advance(&d, eps)).map_err(value_err)
    }

    fn noise_floor(&self, d: Vec<f64>) -> f64 {
        self.inner.noise_floor(&d)
    }
}

/// Mean-field map f(ρ) with k̄ neighbours.
#[pyfunction]
#[pyo3(signature = (rho, eps, kbar = 8))]
fn mf_map(rho: f64, eps: f64, kbar: usize) -> PyResult<f64> {
    Ok(meanfield::mf_map(rho, &MfParams::new(eps, kbar).map_err(value_err)?))
}

/// Fixed points of the mean-field map as `(rho, stable)` pairs.
#[pyfunction]
#[pyo3(signature = (eps, kbar = 8, grid_n = 2000))]
fn mf_fixed_points(eps: f64, kbar: usize, grid_n: usize) -> PyResult<Vec<(f64, bool)>> {
    let params = MfParams::new(eps, kbar).map_err(value_err)?;
    Ok(meanfield::mf_fixed_points(&params, grid_n)
        .map_err(value_err)?
        .into_iter()
        .map(|f| (f.rho_star, f.stable))
        .collect())
}

/// Runs a CLI subcommand on a config file and returns its report as JSON.
#[pyfunction]
#[pyo3(signature = (command, config, out = None))]
fn run_experiment(py: Python<'_>, command: &str, config: PathBuf, out: Option<PathBuf>) -> PyResult<String> {
    let cfg = ExperimentConfig::load(&config).map_err(PyValueError::new_err)?;
    let out = out.unwrap_or_else(|| cfg.output.directory.clone());
    let command = command.to_string();
    py.detach(move || {
        let json = match command.as_str() {
            "simulate" => commands::cmd_simulate(&cfg, &out).map(|r| serde_json::to_string(&r)),
            "continue" => commands::cmd_continue(&cfg, &out).map(|r| serde_json::to_string(&r)),
            "rare" => commands::cmd_rare(&cfg, &out).map(|r| serde_json::to_string(&r)),
            "meanfield" => commands::cmd_meanfield(&cfg, &out).map(|(_, r)| serde_json::to_string(&r)),
            "net-stats" => commands::cmd_net_stats(&cfg, &out).map(|r| serde_json::to_string(&r)),
            other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
        };
        json.map_err(|e| PyRuntimeError::new_err(e.to_string()))?
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    })
}

#[pymodule]
fn efnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyTimestepper>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mf_map, m)?)?;
    m.add_function(wrap_pyfunction!(mf_fixed_points, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
