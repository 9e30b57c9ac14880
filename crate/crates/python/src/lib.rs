//! Python bindings: domains, catalogue functions, the grid and radial solvers,
//! the Feynman-Kac oracle, dimension sweeps and the verification battery.

use std::sync::Mutex;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ouneumann::config::ExperimentConfig;
use ouneumann::cylinder::{self, Interpolant, SweepProblem};
use ouneumann::oracle::{self, Reflection};
use ouneumann::solver::{self, FreeAxis, GridFunction, GridSpec};
use ouneumann::verify::{default_manifest, run_battery};
use ouneumann::{Analytic, ConvexDomain, SmoothFunction};

fn err(e: ouneumann::Error) -> PyErr {
    match e {
        ouneumann::Error::NonConvergence { .. } | ouneumann::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Serializable value as a Python object, through JSON.
fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Domain", module = "pyouneumann", frozen)]
struct PyDomain {
    inner: ConvexDomain,
}

#[pymethods]
impl PyDomain {
    /// `{<normal, x> < offset}` with a unit normal.
    #[staticmethod]
    fn half_space(normal: Vec<f64>, offset: f64) -> PyResult<Self> {
        Ok(Self { inner: ConvexDomain::half_space(normal, offset).map_err(err)? })
    }

    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        Ok(Self { inner: ConvexDomain::ball(center, radius).map_err(err)? })
    }

    /// `{|<normal, x>| < half_width}`.
    #[staticmethod]
    fn slab(normal: Vec<f64>, half_width: f64) -> PyResult<Self> {
        Ok(Self { inner: ConvexDomain::slab(normal, half_width).map_err(err)? })
    }

    #[staticmethod]
    fn cylinder(base: &PyDomain, extra_dims: usize) -> PyResult<Self> {
        Ok(Self { inner: ConvexDomain::cylinder(base.inner.clone(), extra_dims).map_err(err)? })
    }

    #[staticmethod]
    fn whole_space(dim: usize) -> PyResult<Self> {
        Ok(Self { inner: ConvexDomain::whole_space(dim).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("domain serializes")
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        self.inner.contains(&x)
    }

    fn g(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.g(&x).map_err(err)
    }

    /// Outward unit normal at a boundary point.
    fn normal(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.normal(&x).map_err(err)
    }

    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.inner.dim(), x.len())));
        }
        Ok(self.inner.project_to_closure(&x))
    }

    fn __repr__(&self) -> String {
        format!("Domain({})", self.to_json())
    }
}

#[pyclass(name = "Function", module = "pyouneumann", frozen)]
struct PyFunction {
    inner: Analytic,
}

#[pymethods]
impl PyFunction {
    #[staticmethod]
    fn constant(value: f64) -> Self {
        Self { inner: Analytic::constant(value) }
    }

    /// `sum_k coeffs[k] * x[axis]^k`.
    #[staticmethod]
    fn axis_poly(axis: usize, coeffs: Vec<f64>) -> Self {
        Self { inner: Analytic::axis_poly(axis, &coeffs) }
    }

    /// `sum c * prod x_i^p_i` from `(c, [p_1, ..., p_n])` pairs.
    #[staticmethod]
    fn poly(terms: Vec<(f64, Vec<u32>)>) -> Self {
        let refs: Vec<(f64, &[u32])> = terms.iter().map(|(c, p)| (*c, p.as_slice())).collect();
        Self { inner: Analytic::poly(&refs) }
    }

    #[staticmethod]
    fn bump(center: Vec<f64>, width: f64, amplitude: f64) -> Self {
        Self { inner: Analytic::bump(&center, width, amplitude) }
    }

    #[staticmethod]
    fn sum(terms: Vec<PyRef<'_, PyFunction>>) -> Self {
        Self { inner: Analytic::Sum { terms: terms.iter().map(|t| t.inner.clone()).collect() } }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("function serializes")
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.value(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.gradient(&x))
    }

    /// `lam u - (Laplacian u - <x, grad u>)` at `x`.
    fn apply_operator(&self, x: Vec<f64>, lam: f64) -> PyResult<f64> {
        self.check(&x)?;
        Ok(ouneumann::apply_operator(&self.inner, lam).value(&x))
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<f64> {
        self.value(x)
    }

    fn __repr__(&self) -> String {
        format!("Function({})", self.to_json())
    }
}

impl PyFunction {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() < self.inner.min_dim() {
            return Err(PyValueError::new_err(format!("function needs {} coordinates", self.inner.min_dim())));
        }
        Ok(())
    }
}

/// Right-hand side given as a catalogue [`PyFunction`] or any Python callable.
enum Rhs {
    Analytic(Analytic),
    Callable { func: Py<PyAny>, error: Mutex<Option<PyErr>> },
}

impl Rhs {
    fn new(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        if let Ok(f) = obj.extract::<PyRef<'_, PyFunction>>() {
            return Ok(Rhs::Analytic(f.inner.clone()));
        }
        if obj.is_callable() {
            return Ok(Rhs::Callable { func: obj.clone().unbind(), error: Mutex::new(None) });
        }
        Err(PyValueError::new_err("right-hand side must be a Function or a callable taking a list of floats"))
    }

    /// Evaluates at `x`; a Python exception is stored and NaN returned.
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Rhs::Analytic(a) => a.value(x),
            Rhs::Callable { .. } => self.call(x.to_vec()),
        }
    }

    /// Radial data: callables receive `r`, catalogue functions are evaluated at `r e_1`.
    fn eval_radial(&self, r: f64, dim: usize) -> f64 {
        match self {
            Rhs::Analytic(a) => {
                let mut x = vec![0.0; dim];
                x[0] = r;
                a.value(&x)
            }
            Rhs::Callable { .. } => self.call(r),
        }
    }

    fn call<A: for<'py> IntoPyObject<'py> + Send>(&self, arg: A) -> f64 {
        let Rhs::Callable { func, error } = self else { unreachable!("only callables are called") };
        Python::attach(|py| match func.call1(py, (arg,)).and_then(|v| v.extract::<f64>(py)) {
            Ok(v) => v,
            Err(e) => {
                error.lock().unwrap().get_or_insert(e);
                f64::NAN
            }
        })
    }

    fn take_error(&self) -> PyResult<()> {
        match self {
            Rhs::Callable { error, .. } => match error.lock().unwrap().take() {
                Some(e) => Err(e),
                None => Ok(()),
            },
            Rhs::Analytic(_) => Ok(()),
        }
    }
}

/// Discrete solution together with its report.
#[pyclass(name = "Solution", module = "pyouneumann", frozen)]
struct PySolution {
    u: GridFunction,
    domain: ConvexDomain,
    report: solver::SolveReport,
}

#[pymethods]
impl PySolution {
    /// Norms, ratios and solver statistics as a dict.
    #[getter]
    fn report(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.report)
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.u.values.clone()
    }

    /// Grid nodes in ambient coordinates (radius for radial grids).
    #[getter]
    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.u.values.len()).map(|i| self.u.grid.node(i)).collect()
    }

    /// Interpolated value at `x`, clamped into the domain.
    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        let interp = Interpolant::new(&self.u, &self.domain).map_err(err)?;
        if x.len() != interp.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", interp.dim())));
        }
        Ok(interp.eval(&x).0)
    }

    fn __len__(&self) -> usize {
        self.u.values.len()
    }
}

fn grid_spec(spacing: f64, hermite_modes: Option<usize>, truncation: f64) -> GridSpec {
    let free_axis = match hermite_modes {
        Some(modes) => FreeAxis::Hermite { modes },
        None => FreeAxis::Uniform,
    };
    GridSpec { spacing, free_axis, truncation }
}

/// Solves `lam u - L u = f` with Neumann conditions on a tensor grid.
///
/// `hermite_modes=None` uses uniform flux-form free axes.
#[pyfunction]
#[pyo3(signature = (domain, f, lam, spacing = 1.0 / 32.0, hermite_modes = Some(16), truncation = 8.0))]
fn solve(
    py: Python<'_>,
    domain: &PyDomain,
    f: &Bound<'_, PyAny>,
    lam: f64,
    spacing: f64,
    hermite_modes: Option<usize>,
    truncation: f64,
) -> PyResult<PySolution> {
    let rhs = Rhs::new(f)?;
    let spec = grid_spec(spacing, hermite_modes, truncation);
    let d = domain.inner.clone();
    let result = py.detach(|| solver::solve(&d, &|x: &[f64]| rhs.eval(x), lam, &spec));
    rhs.take_error()?;
    let (u, report) = result.map_err(err)?;
    Ok(PySolution { u, domain: d, report })
}

/// Radial solver on a ball centered at the origin; `f` takes the radius.
#[pyfunction]
#[pyo3(signature = (ball, f, lam, n_r = 257))]
fn radial_solve(py: Python<'_>, ball: &PyDomain, f: &Bound<'_, PyAny>, lam: f64, n_r: usize) -> PyResult<PySolution> {
    let rhs = Rhs::new(f)?;
    let d = ball.inner.clone();
    let n = d.dim();
    let result = py.detach(|| solver::radial_solve(&d, &|r: f64| rhs.eval_radial(r, n), lam, n, n_r));
    rhs.take_error()?;
    let (u, report) = result.map_err(err)?;
    Ok(PySolution { u, domain: d, report })
}

/// Feynman-Kac estimate at `x0`; returns value, std_error, budget and settings.
#[pyfunction]
#[pyo3(signature = (domain, f, lam, x0, n_paths = 100_000, dt = 1e-3, t_max = None, seed = 0, reflection = "symmetrized"))]
#[allow(clippy::too_many_arguments)]
fn feynman_kac(
    py: Python<'_>,
    domain: &PyDomain,
    f: &Bound<'_, PyAny>,
    lam: f64,
    x0: Vec<f64>,
    n_paths: usize,
    dt: f64,
    t_max: Option<f64>,
    seed: u64,
    reflection: &str,
) -> PyResult<Py<PyAny>> {
    let scheme = match reflection {
        "symmetrized" => Reflection::Symmetrized,
        "projection" => Reflection::Projection,
        other => return Err(PyValueError::new_err(format!("unknown reflection {other:?}"))),
    };
    let rhs = Rhs::new(f)?;
    let t_max = t_max.unwrap_or(oracle::MIN_DISCOUNT_HORIZON / lam);
    let d = domain.inner.clone();
    let x = x0.clone();
    let result =
        py.detach(|| oracle::feynman_kac_with(scheme, &d, &|y: &[f64]| rhs.eval(y), lam, &x, n_paths, dt, t_max, seed));
    rhs.take_error()?;
    let est = result.map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("value", est.value)?;
    out.set_item("std_error", est.std_error)?;
    out.set_item("n_paths", est.n_paths)?;
    out.set_item("dt", est.dt)?;
    out.set_item("t_max", est.t_max)?;
    out.set_item("budget", est.agreement_budget(&x0))?;
    Ok(out.into_any().unbind())
}

/// Ratios of the one-dimensional problem on `base x R^(n-1)` for each `n` in `dims`.
#[pyfunction]
#[pyo3(signature = (base, f, lam, dims, spacing = 1.0 / 32.0, hermite_modes = 4))]
fn dimension_sweep(
    py: Python<'_>,
    base: &PyDomain,
    f: &PyFunction,
    lam: f64,
    dims: Vec<usize>,
    spacing: f64,
    hermite_modes: usize,
) -> PyResult<Py<PyAny>> {
    let problem = SweepProblem {
        base: base.inner.clone(),
        rhs: f.inner.clone(),
        grid: grid_spec(spacing, Some(hermite_modes), 8.0),
        record_timing: false,
    };
    let rows = py.detach(|| cylinder::dimension_sweep(&problem, &dims, lam)).map_err(err)?;
    to_py(py, &rows)
}

/// Solve on `base`, lift to `base x R^extra_dims` and compare with a direct solve.
#[pyfunction]
#[pyo3(signature = (base, f, lam, extra_dims = 1, spacing = 1.0 / 32.0, hermite_modes = 6))]
fn cylinder_equivalence(
    py: Python<'_>,
    base: &PyDomain,
    f: &PyFunction,
    lam: f64,
    extra_dims: usize,
    spacing: f64,
    hermite_modes: usize,
) -> PyResult<Py<PyAny>> {
    let d = base.inner.clone();
    let rhs = f.inner.clone();
    let base_grid = GridSpec::with_spacing(spacing);
    let direct = grid_spec(spacing, Some(hermite_modes), 8.0);
    let rep = py
        .detach(|| cylinder::cylinder_equivalence(&d, &|x: &[f64]| rhs.value(x), lam, extra_dims, &base_grid, &direct))
        .map_err(err)?;
    to_py(py, &rep)
}

/// Runs the default verification battery and returns its report as a dict.
#[pyfunction]
fn verify(py: Python<'_>) -> PyResult<Py<PyAny>> {
    let report = py.detach(|| run_battery(&default_manifest(), "python")).map_err(err)?;
    to_py(py, &report)
}

/// Runs a TOML experiment; returns `(exit_code, failures, artifacts)`.
#[pyfunction]
fn run_config(py: Python<'_>, toml: &str) -> PyResult<(i32, Vec<String>, Vec<String>)> {
    let cfg = ExperimentConfig::from_toml(toml).map_err(err)?;
    let out = py.detach(|| ouneumann::run::run(&cfg));
    if let Some(e) = out.error {
        return Err(PyRuntimeError::new_err(e));
    }
    let artifacts = out.artifacts.iter().map(|p| p.display().to_string()).collect();
    Ok((out.status.code(), out.failures, artifacts))
}

/// `C(lam) = 1/lam^2 + 1/lam + 2`.
#[pyfunction]
fn w22_constant(lam: f64) -> f64 {
    solver::w22_constant(lam)
}

#[pymodule]
fn pyouneumann(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", ouneumann::report::VERSION)?;
    m.add_class::<PyDomain>()?;
    m.add_class::<PyFunction>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(radial_solve, m)?)?;
    m.add_function(wrap_pyfunction!(feynman_kac, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(cylinder_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(w22_constant, m)?)?;
    Ok(())
}
