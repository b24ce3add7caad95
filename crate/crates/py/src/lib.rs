//! Python bindings. Paths cross the boundary as lists of node values on a
//! uniform grid over `[0, T]`.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reflectvol_core as rv;
use rv::optim::OptimizerConfig;
use rv::{BarrierKind, BarrierSet, ModelSpec, OptionKind, OptionSpec, Statistic, TimeGrid, VolDynamics};

create_exception!(reflectvol, NumericalError, PyRuntimeError);

fn py_err(e: rv::Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rv::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn grid(horizon: f64, n_steps: usize) -> PyResult<TimeGrid> {
    TimeGrid::new(horizon, n_steps).py()
}

fn path(values: Vec<f64>, horizon: f64) -> PyResult<rv::Path> {
    if values.len() < 2 {
        return Err(PyValueError::new_err("a path needs at least two nodes"));
    }
    rv::Path::new(grid(horizon, values.len() - 1)?, values).py()
}

fn optimizer(n_starts: Option<usize>, seed: Option<u64>) -> PyResult<OptimizerConfig> {
    let mut cfg = OptimizerConfig::default();
    if let Some(n) = n_starts {
        cfg.n_starts = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().py()?;
    Ok(cfg)
}

fn parse_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import_bound("json")?.call_method1("loads", (text,))
}

/// A model specification: coefficient family plus initial state.
#[pyclass(name = "Model", module = "reflectvol", frozen)]
#[derive(Clone)]
struct PyModel {
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (q, m, xi, y0, mu=None, s0=1.0, rho=0.0, r=0.0, T=1.0))]
    #[allow(non_snake_case, clippy::too_many_arguments)]
    fn reflected_ou(
        q: f64,
        m: f64,
        xi: f64,
        y0: f64,
        mu: Option<f64>,
        s0: f64,
        rho: f64,
        r: f64,
        T: f64,
    ) -> PyResult<Self> {
        let cs = rv::make_reflected_ou(q, m, xi, mu.unwrap_or(r)).py()?;
        Ok(Self { spec: ModelSpec::new(cs, y0, s0, rho, r, T).py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (a, xi, y0, mu=None, s0=1.0, rho=0.0, r=0.0, T=1.0))]
    #[allow(non_snake_case, clippy::too_many_arguments)]
    fn reflected_bm_drift(
        a: f64,
        xi: f64,
        y0: f64,
        mu: Option<f64>,
        s0: f64,
        rho: f64,
        r: f64,
        T: f64,
    ) -> PyResult<Self> {
        let cs = rv::make_reflected_bm_drift(a, xi, mu.unwrap_or(r)).py()?;
        Ok(Self { spec: ModelSpec::new(cs, y0, s0, rho, r, T).py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (sigma0, r=0.0, s0=1.0, rho=0.0, T=1.0))]
    #[allow(non_snake_case)]
    fn constant_vol(sigma0: f64, r: f64, s0: f64, rho: f64, T: f64) -> PyResult<Self> {
        let cs = rv::make_constant_vol(sigma0, r).py()?;
        Ok(Self { spec: ModelSpec::new(cs, 0.0, s0, rho, r, T).py()? })
    }

    /// `dynamics` is `"reflected_ou"` (needs q, m, xi) or
    /// `"reflected_bm_drift"` (needs a, xi).
    #[staticmethod]
    #[pyo3(signature = (k, dynamics, xi, y0, q=0.0, m=0.0, a=0.0, mu=None, s0=1.0, rho=0.0, r=0.0, T=1.0))]
    #[allow(non_snake_case, clippy::too_many_arguments)]
    fn exponential_vol(
        k: f64,
        dynamics: &str,
        xi: f64,
        y0: f64,
        q: f64,
        m: f64,
        a: f64,
        mu: Option<f64>,
        s0: f64,
        rho: f64,
        r: f64,
        T: f64,
    ) -> PyResult<Self> {
        let d = match dynamics {
            "reflected_ou" => VolDynamics::reflected_ou(q, m, xi).py()?,
            "reflected_bm_drift" => VolDynamics::reflected_bm_drift(a, xi).py()?,
            other => return Err(PyValueError::new_err(format!("unknown dynamics {other:?}"))),
        };
        let cs = rv::make_exponential_vol(k, mu.unwrap_or(r), d).py()?;
        Ok(Self { spec: ModelSpec::new(cs, y0, s0, rho, r, T).py()? })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.spec.coefficients.family_name()
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.spec.x0()
    }

    #[getter]
    #[allow(non_snake_case)]
    fn T(&self) -> f64 {
        self.spec.horizon
    }

    #[getter]
    fn y0(&self) -> f64 {
        self.spec.y0
    }

    #[getter]
    fn is_risk_neutral(&self) -> bool {
        self.spec.is_risk_neutral()
    }

    fn __repr__(&self) -> String {
        format!("Model({}, y0={}, T={})", self.family(), self.spec.y0, self.spec.horizon)
    }
}

#[pyfunction]
#[pyo3(signature = (values, T=1.0))]
#[allow(non_snake_case)]
fn skorokhod_map(values: Vec<f64>, T: f64) -> PyResult<Vec<f64>> {
    Ok(rv::skorokhod_map(&path(values, T)?).into_values())
}

#[pyfunction]
#[pyo3(signature = (values, delta, T=1.0))]
#[allow(non_snake_case)]
fn modulus_of_continuity(values: Vec<f64>, delta: f64, T: f64) -> PyResult<f64> {
    rv::modulus_of_continuity(&path(values, T)?, delta).py()
}

/// `f̂ = Γ(G ḟ)` for a piecewise-constant derivative with one value per step.
#[pyfunction]
fn hat_map(model: &PyModel, derivative: Vec<f64>) -> PyResult<Vec<f64>> {
    let s = &model.spec;
    let ctl = rv::Control::new(grid(s.horizon, derivative.len())?, derivative).py()?;
    Ok(rv::hat_map(&s.coefficients, s.y0, &ctl).py()?.into_values())
}

/// Inverse-control map: the derivative that drives `values` through `G`.
#[pyfunction]
fn m_operator(model: &PyModel, values: Vec<f64>) -> PyResult<Vec<f64>> {
    let s = &model.spec;
    Ok(rv::m_operator(&s.coefficients, s.y0, &path(values, s.horizon)?).py()?.derivative().to_vec())
}

/// One replica of `(U, Y, X)`.
#[pyfunction]
#[pyo3(signature = (model, eps, n_steps, seed, replica=0))]
fn simulate<'py>(
    py: Python<'py>,
    model: &PyModel,
    eps: f64,
    n_steps: usize,
    seed: u64,
    replica: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let noise = rv::NoiseBundle::generate(grid(model.spec.horizon, n_steps)?, seed, replica);
    let t = rv::simulate_logprice(&model.spec, eps, &noise).py()?;
    let d = PyDict::new_bound(py);
    d.set_item("t", t.u.grid().nodes().collect::<Vec<f64>>())?;
    d.set_item("u", t.u.into_values())?;
    d.set_item("y", t.y.into_values())?;
    d.set_item("x", t.x.into_values())?;
    Ok(d)
}

fn statistic(name: &str, level: Option<f64>) -> PyResult<Statistic> {
    let need = || level.ok_or_else(|| PyValueError::new_err(format!("statistic {name:?} needs a level")));
    Ok(match name {
        "one" => Statistic::One,
        "terminal_log_price" => Statistic::TerminalLogPrice,
        "terminal_volatility" => Statistic::TerminalVolatility,
        "sup_volatility" => Statistic::SupVolatility,
        "discounted_price" => Statistic::DiscountedPrice,
        "terminal_log_price_above" => Statistic::TerminalLogPriceAbove { level: need()? },
        "sup_volatility_above" => Statistic::SupVolatilityAbove { level: need()? },
        "max_log_price_above" => Statistic::MaxLogPriceAbove { level: need()? },
        "min_log_price_below" => Statistic::MinLogPriceBelow { level: need()? },
        other => return Err(PyValueError::new_err(format!("unknown statistic {other:?}"))),
    })
}

fn estimate_dict<'py>(py: Python<'py>, e: &rv::MCEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("mean", e.mean)?;
    d.set_item("stderr", e.stderr)?;
    d.set_item("n", e.n)?;
    d.set_item("aborted", e.aborted)?;
    d.set_item("eps", e.eps)?;
    d.set_item("seed", e.seed)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (model, eps, n_steps, n_replicas, seed, statistic_name, level=None))]
fn batch_estimate<'py>(
    py: Python<'py>,
    model: &PyModel,
    eps: f64,
    n_steps: usize,
    n_replicas: usize,
    seed: u64,
    statistic_name: &str,
    level: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let stat = statistic(statistic_name, level)?;
    let g = grid(model.spec.horizon, n_steps)?;
    let e = py.allow_threads(|| rv::batch_estimate(&model.spec, eps, g, n_replicas, seed, stat)).py()?;
    estimate_dict(py, &e)
}

fn rate_dict<'py>(py: Python<'py>, r: &rv::RateResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("value", r.value.finite().unwrap_or(f64::INFINITY))?;
    d.set_item("branch", format!("{:?}", r.branch).to_lowercase())?;
    d.set_item("regular_value", r.regular_value.map(|v| v.finite().unwrap_or(f64::INFINITY)))?;
    d.set_item("degenerate_value", r.degenerate_value)?;
    d.set_item("n_starts", r.n_starts)?;
    d.set_item("converged_starts", r.converged_starts)?;
    d.set_item("best_gradient_norm", r.best_gradient_norm)?;
    d.set_item("minimizer_f", r.minimizer_f.integrate().into_values())?;
    d.set_item("minimizer_g", r.minimizer_g.as_ref().map(|g| g.values().to_vec()))?;
    Ok(d)
}

/// `Ĩ_T(x)` with its branch diagnostics and minimizer.
#[pyfunction]
#[pyo3(signature = (model, x, n_steps, n_starts=None, seed=None))]
fn itilde<'py>(
    py: Python<'py>,
    model: &PyModel,
    x: f64,
    n_steps: usize,
    n_starts: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = optimizer(n_starts, seed)?;
    let g = grid(model.spec.horizon, n_steps)?;
    let r = py.allow_threads(|| rv::itilde(&model.spec, x, g, &cfg)).py()?;
    rate_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (model, n_steps, n_starts=None, seed=None))]
fn l1_infimum(py: Python<'_>, model: &PyModel, n_steps: usize, n_starts: Option<usize>, seed: Option<u64>) -> PyResult<f64> {
    let cfg = optimizer(n_starts, seed)?;
    let g = grid(model.spec.horizon, n_steps)?;
    py.allow_threads(|| rv::l1_infimum(&model.spec, g, &cfg)).py()
}

fn barrier_kind(kind: &str) -> PyResult<BarrierKind> {
    Ok(match kind {
        "up_in" => BarrierKind::UpIn,
        "up_out" => BarrierKind::UpOut,
        "down_in" => BarrierKind::DownIn,
        "down_out" => BarrierKind::DownOut,
        other => return Err(PyValueError::new_err(format!("unknown barrier kind {other:?}"))),
    })
}

/// Infimum of `Q̃_T` over the paths that hit (or avoid) the barrier.
#[pyfunction]
fn qtilde_pathset_inf<'py>(
    py: Python<'py>,
    model: &PyModel,
    kind: &str,
    barrier: f64,
    n_steps: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let set = BarrierSet { kind: barrier_kind(kind)?, barrier };
    let g = grid(model.spec.horizon, n_steps)?;
    let r = rv::qtilde_pathset_inf(&model.spec, set, g, &OptimizerConfig::default()).py()?;
    rate_dict(py, &r)
}

#[pyfunction]
fn j_rate(model: &PyModel, values: Vec<f64>) -> PyResult<f64> {
    let r = rv::j_rate(&model.spec, &path(values, model.spec.horizon)?).py()?;
    Ok(r.value.finite().unwrap_or(f64::INFINITY))
}

fn option_kind(kind: &str) -> PyResult<OptionKind> {
    Ok(match kind {
        "binary_up_in" => OptionKind::BinaryUpIn,
        "binary_up_out" => OptionKind::BinaryUpOut,
        "binary_down_in" => OptionKind::BinaryDownIn,
        "binary_down_out" => OptionKind::BinaryDownOut,
        "digital_call" => OptionKind::DigitalCall,
        "vanilla_call" => OptionKind::VanillaCall,
        other => return Err(PyValueError::new_err(format!("unknown option kind {other:?}"))),
    })
}

#[pyfunction]
#[pyo3(signature = (model, kind, strike, eps, n_steps, n_replicas, seed, cash=1.0))]
#[allow(clippy::too_many_arguments)]
fn mc_option_price<'py>(
    py: Python<'py>,
    model: &PyModel,
    kind: &str,
    strike: f64,
    eps: f64,
    n_steps: usize,
    n_replicas: usize,
    seed: u64,
    cash: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let opt = OptionSpec::new(option_kind(kind)?, strike, cash).py()?;
    let g = grid(model.spec.horizon, n_steps)?;
    let e = py.allow_threads(|| rv::mc_option_price(&model.spec, &opt, eps, g, n_replicas, seed)).py()?;
    estimate_dict(py, &e)
}

/// LDP report for a binary barrier (`binary_*`), digital call (terminal
/// set) or vanilla call, as a dict.
#[pyfunction]
#[pyo3(signature = (model, kind, strike, eps_ladder, n_steps, n_replicas, seed, n_starts=None))]
#[allow(clippy::too_many_arguments)]
fn ldp_report<'py>(
    py: Python<'py>,
    model: &PyModel,
    kind: &str,
    strike: f64,
    eps_ladder: Vec<f64>,
    n_steps: usize,
    n_replicas: usize,
    seed: u64,
    n_starts: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = option_kind(kind)?;
    let cfg = optimizer(n_starts, Some(seed))?;
    let g = grid(model.spec.horizon, n_steps)?;
    let spec = &model.spec;
    let report = py
        .allow_threads(|| match kind {
            OptionKind::VanillaCall => rv::call_ldp_report(spec, strike, &eps_ladder, g, n_replicas, seed, &cfg),
            OptionKind::DigitalCall => {
                rv::terminal_ldp_report(spec, strike.ln() - spec.x0(), &eps_ladder, g, n_replicas, seed, &cfg)
            }
            _ => OptionSpec::new(kind, strike, 1.0)
                .and_then(|o| rv::barrier_ldp_report(spec, &o, &eps_ladder, g, n_replicas, seed, &cfg)),
        })
        .py()?;
    let text = serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    parse_json(py, &text)
}

#[pyfunction]
fn martingale_check<'py>(
    py: Python<'py>,
    model: &PyModel,
    n_steps: usize,
    n_replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = grid(model.spec.horizon, n_steps)?;
    let r = py.allow_threads(|| rv::martingale_check(&model.spec, g, n_replicas, seed)).py()?;
    let text = serde_json::to_string(&r).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    parse_json(py, &text)
}

#[pymodule]
#[pyo3(name = "reflectvol")]
fn reflectvol_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", rv::VERSION)?;
    m.add("NumericalError", m.py().get_type_bound::<NumericalError>())?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(skorokhod_map, m)?)?;
    m.add_function(wrap_pyfunction!(modulus_of_continuity, m)?)?;
    m.add_function(wrap_pyfunction!(hat_map, m)?)?;
    m.add_function(wrap_pyfunction!(m_operator, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(batch_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(itilde, m)?)?;
    m.add_function(wrap_pyfunction!(l1_infimum, m)?)?;
    m.add_function(wrap_pyfunction!(qtilde_pathset_inf, m)?)?;
    m.add_function(wrap_pyfunction!(j_rate, m)?)?;
    m.add_function(wrap_pyfunction!(mc_option_price, m)?)?;
    m.add_function(wrap_pyfunction!(ldp_report, m)?)?;
    m.add_function(wrap_pyfunction!(martingale_check, m)?)?;
    Ok(())
}
