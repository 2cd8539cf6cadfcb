//! Python bindings for the `fluidosc` simulator.

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fluidosc::harness::cli::verify_file;
use fluidosc::harness::config::{RunConfig, SweepConfig};
use fluidosc::harness::trajfile;
use fluidosc::sweep::{metrics_csv, run_config, run_sweep};

fn err(e: fluidosc::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "FluidParams", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFluidParams {
    mu: f64,
    lambda_: f64,
    a: f64,
    gamma: f64,
    k_spring: f64,
    epsilon: f64,
    delta: f64,
    length: f64,
    n_modes: usize,
    n_cells: usize,
    dt: f64,
    fp_tol: f64,
    fp_max_iter: usize,
}

impl From<fluidosc::FluidParams> for PyFluidParams {
    fn from(p: fluidosc::FluidParams) -> Self {
        Self {
            mu: p.mu,
            lambda_: p.lambda,
            a: p.a,
            gamma: p.gamma,
            k_spring: p.k_spring,
            epsilon: p.epsilon,
            delta: p.delta,
            length: p.length,
            n_modes: p.n_modes,
            n_cells: p.n_cells,
            dt: p.dt,
            fp_tol: p.fp_tol,
            fp_max_iter: p.fp_max_iter,
        }
    }
}

impl PyFluidParams {
    fn core(&self) -> fluidosc::FluidParams {
        fluidosc::FluidParams {
            mu: self.mu,
            lambda: self.lambda_,
            a: self.a,
            gamma: self.gamma,
            k_spring: self.k_spring,
            epsilon: self.epsilon,
            delta: self.delta,
            length: self.length,
            n_modes: self.n_modes,
            n_cells: self.n_cells,
            dt: self.dt,
            fp_tol: self.fp_tol,
            fp_max_iter: self.fp_max_iter,
        }
    }
}

#[pymethods]
impl PyFluidParams {
    /// Reference parameters, with any field overridden by keyword.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cell = Bound::new(py, Self::from(fluidosc::FluidParams::reference()))?;
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let name: String = k.extract()?;
                let name = if name == "lambda" { "lambda_" } else { name.as_str() };
                cell.as_any().setattr(name, v)?;
            }
        }
        let out = cell.borrow().clone();
        Ok(out)
    }

    fn validate(&self) -> PyResult<()> {
        self.core().validate().map_err(err)
    }

    fn dx(&self) -> f64 {
        self.core().dx()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.core())
    }
}

#[pyclass(name = "ForcingSignal", skip_from_py_object)]
#[derive(Clone)]
struct PyForcing {
    inner: fluidosc::ForcingSignal,
}

#[pymethods]
impl PyForcing {
    #[staticmethod]
    fn zero() -> Self {
        Self {
            inner: fluidosc::ForcingSignal::Zero,
        }
    }

    #[staticmethod]
    #[pyo3(signature = (amplitude, omega, phase = 0.0))]
    fn sinusoid(amplitude: f64, omega: f64, phase: f64) -> Self {
        Self {
            inner: fluidosc::ForcingSignal::Sinusoid { amplitude, omega, phase },
        }
    }

    #[staticmethod]
    fn sampled(times: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        let inner = fluidosc::ForcingSignal::sampled(times, values).map_err(err)?;
        Ok(Self { inner })
    }

    fn __call__(&self, t: f64) -> PyResult<f64> {
        self.inner.eval(t).map_err(err)
    }

    fn rate(&self, t: f64) -> PyResult<f64> {
        self.inner.rate(t).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "FluidState", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyFluidState {
    t: f64,
    rho: Vec<f64>,
    v_coeffs: Vec<f64>,
    b: f64,
    beta: f64,
}

impl From<fluidosc::FluidState> for PyFluidState {
    fn from(s: fluidosc::FluidState) -> Self {
        Self {
            t: s.t,
            rho: s.rho,
            v_coeffs: s.v_coeffs,
            b: s.b,
            beta: s.beta,
        }
    }
}

impl PyFluidState {
    fn core(&self) -> PyResult<fluidosc::FluidState> {
        fluidosc::FluidState::new(self.t, self.rho.clone(), self.v_coeffs.clone(), self.b, self.beta).map_err(err)
    }
}

#[pymethods]
impl PyFluidState {
    #[new]
    #[pyo3(signature = (rho, v_coeffs, b = 0.0, beta = 0.0, t = 0.0))]
    fn new(rho: Vec<f64>, v_coeffs: Vec<f64>, b: f64, beta: f64, t: f64) -> PyResult<Self> {
        Ok(fluidosc::FluidState::new(t, rho, v_coeffs, b, beta).map_err(err)?.into())
    }

    #[staticmethod]
    #[pyo3(signature = (params, rho0 = 1.0, b = 0.0, beta = 0.0))]
    fn uniform(params: &PyFluidParams, rho0: f64, b: f64, beta: f64) -> PyResult<Self> {
        Ok(fluidosc::FluidState::uniform(&params.core(), rho0, b, beta).map_err(err)?.into())
    }

    /// `rho0 + amplitude cos(mode pi x / L)` at rest.
    #[staticmethod]
    #[pyo3(signature = (params, rho0, amplitude, mode, b = 0.0, beta = 0.0))]
    fn cosine(params: &PyFluidParams, rho0: f64, amplitude: f64, mode: usize, b: f64, beta: f64) -> PyResult<Self> {
        let p = params.core();
        let rho = fluidosc::FluidState::cosine_profile(&p, rho0, amplitude, mode);
        Ok(fluidosc::FluidState::new(0.0, rho, vec![0.0; p.n_modes], b, beta).map_err(err)?.into())
    }

    fn mass(&self, params: &PyFluidParams) -> f64 {
        self.rho.iter().sum::<f64>() * params.core().dx()
    }

    fn __repr__(&self) -> String {
        format!(
            "FluidState(t={}, b={}, beta={}, n_cells={}, n_modes={})",
            self.t,
            self.b,
            self.beta,
            self.rho.len(),
            self.v_coeffs.len()
        )
    }
}

fn ledger_dict<'py>(py: Python<'py>, l: &fluidosc::EnergyLedgerRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", l.t)?;
    d.set_item("kinetic", l.kinetic)?;
    d.set_item("pressure_potential", l.pressure_potential)?;
    d.set_item("artificial_potential", l.artificial_potential)?;
    d.set_item("spring", l.spring)?;
    d.set_item("dissipation_visc", l.dissipation_visc)?;
    d.set_item("dissipation_eps", l.dissipation_eps)?;
    d.set_item("power_in", l.power_in)?;
    d.set_item("mass", l.mass)?;
    d.set_item("total_momentum", l.total_momentum)?;
    d.set_item("energy", l.energy())?;
    Ok(d)
}

#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    inner: fluidosc::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    #[getter]
    fn completed(&self) -> bool {
        self.inner.status.is_completed()
    }

    #[getter]
    fn status(&self) -> String {
        trajfile::status_text(&self.inner.status)
    }

    #[getter]
    fn output_every(&self) -> usize {
        self.inner.output_every
    }

    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    fn displacements(&self) -> Vec<f64> {
        self.inner.displacements()
    }

    fn energies(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.ledger.energy()).collect()
    }

    fn state(&self, i: usize) -> PyResult<PyFluidState> {
        let r = self
            .inner
            .records
            .get(i)
            .ok_or_else(|| PyIndexError::new_err(format!("record {i} out of range")))?;
        Ok(r.state.clone().into())
    }

    fn ledger<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyDict>> {
        let r = self
            .inner
            .records
            .get(i)
            .ok_or_else(|| PyIndexError::new_err(format!("record {i} out of range")))?;
        ledger_dict(py, &r.ledger)
    }

    fn monitors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.inner.monitors;
        let d = PyDict::new(py);
        d.set_item("steps", m.steps)?;
        d.set_item("rejected_attempts", m.rejected_attempts)?;
        d.set_item("max_mass_drift", m.max_mass_drift)?;
        d.set_item("energy_violations", m.energy_violations)?;
        d.set_item("max_energy_defect", m.max_energy_defect)?;
        d.set_item("max_fp_iterations", m.max_fp_iterations)?;
        Ok(d)
    }
}

/// Advance one coupled step; returns the new state and the step report.
#[pyfunction]
fn step<'py>(
    py: Python<'py>,
    state: &PyFluidState,
    params: &PyFluidParams,
    forcing: &PyForcing,
) -> PyResult<(PyFluidState, Bound<'py, PyDict>)> {
    let s = state.core()?;
    let (next, report) = fluidosc::step(&s, &params.core(), &forcing.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("dt_used", report.dt_used)?;
    d.set_item("fp_iterations", report.fp_iterations)?;
    d.set_item("fp_residual", report.fp_residual)?;
    d.set_item("energy_defect", report.energy_defect)?;
    d.set_item("newton_residual", report.newton_residual)?;
    d.set_item("cfl_ratio", report.cfl_ratio)?;
    d.set_item("retries", report.retries)?;
    Ok((next.into(), d))
}

#[pyfunction]
#[pyo3(signature = (state, params, forcing, t_end, output_every = 1))]
fn run(
    py: Python<'_>,
    state: &PyFluidState,
    params: &PyFluidParams,
    forcing: &PyForcing,
    t_end: f64,
    output_every: usize,
) -> PyResult<PyTrajectory> {
    let s = state.core()?;
    let p = params.core();
    let f = forcing.inner.clone();
    let inner = py.detach(move || fluidosc::run(&s, &p, &f, t_end, output_every)).map_err(err)?;
    Ok(PyTrajectory { inner })
}

/// Closed-form `(b, bdot)` of the rigid oscillator `m b'' + k b = k w(t)`.
#[pyfunction]
#[pyo3(signature = (t, amplitude, omega, b0 = 0.0, bdot0 = 0.0, k_spring = 1.0, mass = 1.0, phase = 0.0))]
#[allow(clippy::too_many_arguments)]
fn rigid_closed_form(
    t: f64,
    amplitude: f64,
    omega: f64,
    b0: f64,
    bdot0: f64,
    k_spring: f64,
    mass: f64,
    phase: f64,
) -> PyResult<(f64, f64)> {
    let p = fluidosc::RigidParams {
        k_spring,
        mass,
        forcing: fluidosc::ForcingSignal::Sinusoid { amplitude, omega, phase },
        b0,
        bdot0,
    };
    fluidosc::rigid_closed_form(t, &p).map_err(err)
}

/// TOML text of a named preset (`equilibrium`, `free-decay`, `forced`).
#[pyfunction]
fn preset(name: &str) -> PyResult<String> {
    RunConfig::preset(name).and_then(|c| c.to_toml()).map_err(err)
}

/// Run a TOML configuration and return the rendered trajectory file.
#[pyfunction]
#[pyo3(signature = (config, overrides = Vec::new()))]
fn simulate(py: Python<'_>, config: &str, overrides: Vec<String>) -> PyResult<String> {
    let cfg = RunConfig::from_toml_with_overrides(config, &overrides).map_err(err)?;
    py.detach(|| run_config(&cfg).and_then(|traj| trajfile::render(&cfg, &traj)))
        .map_err(err)
}

/// Re-check a trajectory file; returns `(passed, checks)`.
#[pyfunction]
#[pyo3(signature = (text, snapshots = None))]
fn verify<'py>(
    py: Python<'py>,
    text: &str,
    snapshots: Option<&str>,
) -> PyResult<(bool, Vec<Bound<'py, PyDict>>)> {
    let file = trajfile::parse(text).map_err(err)?;
    let checks = py.detach(|| verify_file(&file, text, snapshots)).map_err(err)?;
    let passed = checks.iter().all(|c| c.passed != Some(false));
    let mut out = Vec::with_capacity(checks.len());
    for c in &checks {
        let d = PyDict::new(py);
        d.set_item("name", &c.name)?;
        d.set_item("passed", c.passed)?;
        d.set_item("value", c.value)?;
        d.set_item("tolerance", c.tolerance)?;
        d.set_item("note", &c.note)?;
        out.push(d);
    }
    Ok((passed, out))
}

/// Run a sweep configuration and return the metrics CSV.
#[pyfunction]
fn sweep(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = SweepConfig::from_toml(config).map_err(err)?;
    Ok(py.detach(|| metrics_csv(&run_sweep(&cfg))))
}

#[pymodule]
fn fluidosc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFluidParams>()?;
    m.add_class::<PyForcing>()?;
    m.add_class::<PyFluidState>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(rigid_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
