//! Python bindings exposing the objective family, the GD engine, the
//! phenomena detectors, and the theorem verifier.

use eoslab::engine::{run, RunConfig, Status};
use eoslab::experiment::figure_data;
use eoslab::family::{compose, ObjectiveSpec, Point2D};
use eoslab::phenomena::PhenomenaReport;
use eoslab::theorems::{self, LrChoice, TheoremId};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

/// One member of the objective family `f(x, y) = F(xy)`.
#[pyclass(name = "Objective", from_py_object)]
#[derive(Clone)]
struct PyObjective {
    spec: ObjectiveSpec,
}

#[pymethods]
impl PyObjective {
    /// Good-regularity member with exponent `0 < a <= 1`.
    #[staticmethod]
    fn good(a: f64) -> PyResult<Self> {
        Ok(Self { spec: ObjectiveSpec::good(a).map_err(value_error)? })
    }

    /// Bad-regularity member with odd degree `b >= 1`.
    #[staticmethod]
    fn bad(b: u32) -> PyResult<Self> {
        Ok(Self { spec: ObjectiveSpec::bad(b).map_err(value_error)? })
    }

    /// Bump-perturbed `a = 1` member.
    #[staticmethod]
    fn perturbed() -> Self {
        Self { spec: ObjectiveSpec::perturbed() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { spec: serde_json::from_str(text).map_err(value_error)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(value_error)
    }

    fn f(&self, s: f64) -> f64 {
        self.spec.eval_f(s)
    }

    fn loss(&self, s: f64) -> f64 {
        self.spec.eval_loss(s)
    }

    fn df(&self, s: f64) -> f64 {
        self.spec.eval_df(s)
    }

    fn ddf(&self, s: f64) -> f64 {
        self.spec.eval_ddf(s)
    }

    fn grad(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        Ok(self.spec.eval_grad(Point2D::new(x, y).map_err(value_error)?))
    }

    fn hessian<'py>(&self, py: Python<'py>, x: f64, y: f64) -> PyResult<Bound<'py, PyDict>> {
        let h = self.spec.eval_hessian(Point2D::new(x, y).map_err(value_error)?);
        let dict = PyDict::new(py);
        dict.set_item("trace", h.trace)?;
        dict.set_item("determinant", h.determinant)?;
        dict.set_item("eig_max_magnitude", h.eig_max_magnitude)?;
        dict.set_item("eig_min", h.eig_min)?;
        Ok(dict)
    }

    fn sharpness(&self, x: f64, y: f64) -> PyResult<f64> {
        Ok(self.spec.sharpness(Point2D::new(x, y).map_err(value_error)?))
    }

    fn ell(&self, delta: f64) -> f64 {
        self.spec.ell(delta)
    }

    fn q(&self, delta: f64) -> f64 {
        self.spec.q(delta)
    }

    fn l_cap(&self, delta: f64) -> f64 {
        self.spec.l_cap(delta)
    }

    fn dor(&self) -> f64 {
        self.spec.degree_of_regularity()
    }

    fn __repr__(&self) -> String {
        format!("Objective({:?})", self.spec.kind())
    }
}

/// A recorded GD trajectory with per-step diagnostics.
#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    traj: eoslab::engine::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn status(&self) -> &'static str {
        match self.traj.status {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxIters => "max_iters",
            Status::DegenerateHit => "degenerate_hit",
        }
    }

    #[getter]
    fn iterations(&self) -> u64 {
        self.traj.iterations
    }

    #[getter]
    fn learning_rate(&self) -> f64 {
        self.traj.learning_rate
    }

    #[getter]
    fn limit(&self) -> Option<(f64, f64)> {
        self.traj.limit.map(|p| (p.x, p.y))
    }

    #[getter]
    fn limit_sharpness(&self) -> Option<f64> {
        self.traj.limit_sharpness
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let pick: fn(&eoslab::engine::StepRecord) -> f64 = match name {
            "k" => |s| s.k as f64,
            "x" => |s| s.x,
            "y" => |s| s.y,
            "loss" => |s| s.loss,
            "delta" => |s| s.delta,
            "ell" => |s| s.ell,
            "q" => |s| s.q,
            "r" => |s| s.r,
            "uu" => |s| s.uu,
            "sharpness" => |s| s.sharpness,
            other => return Err(value_error(format!("unknown column {other:?}"))),
        };
        Ok(self.traj.steps.iter().map(pick).collect())
    }

    /// Phenomena report as a dict with the fixed key set.
    fn phenomena<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = PhenomenaReport::from_trajectory(&self.traj);
        json_to_py(py, &report.to_json())
    }

    fn __len__(&self) -> usize {
        self.traj.steps.len()
    }
}

/// Run gradient descent; exactly one of `h` (raw learning rate) or `c`
/// (theorem-form multiplier) must be given.
#[pyfunction]
#[pyo3(signature = (spec, x0, y0, h=None, c=None, max_iters=2_000_000, record_stride=1, convergence_tol=1e-12, divergence_bound=1e12))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    spec: &PyObjective,
    x0: f64,
    y0: f64,
    h: Option<f64>,
    c: Option<f64>,
    max_iters: u64,
    record_stride: u64,
    convergence_tol: f64,
    divergence_bound: f64,
) -> PyResult<PyTrajectory> {
    let h = match (h, c) {
        (Some(h), None) => h,
        (None, Some(c)) => theorems::learning_rate_from_c(&spec.spec, x0, y0, c),
        _ => return Err(value_error("exactly one of h or c is required")),
    };
    let mut cfg = RunConfig::new(spec.spec.clone(), x0, y0, h);
    cfg.max_iters = max_iters;
    cfg.record_stride = record_stride;
    cfg.convergence_tol = convergence_tol;
    cfg.divergence_bound = divergence_bound;
    Ok(PyTrajectory { traj: run(&cfg).map_err(value_error)? })
}

/// Check one theorem on a configuration; returns the verdict record.
#[pyfunction]
fn verify<'py>(
    py: Python<'py>,
    theorem: &str,
    spec: &PyObjective,
    x0: f64,
    y0: f64,
    c: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let id: TheoremId = theorem.parse().map_err(value_error)?;
    let check = theorems::verify(id, &spec.spec, x0, y0, LrChoice::C(c));
    let value = serde_json::to_value(&check).map_err(value_error)?;
    json_to_py(py, &value)
}

/// Regime constants (M1, M2, M3, c1, c2) for a configuration.
#[pyfunction]
fn regime_constants<'py>(
    py: Python<'py>,
    spec: &PyObjective,
    x0: f64,
    y0: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let rc = theorems::regime_constants(&spec.spec, x0, y0);
    let value = serde_json::to_value(rc).map_err(value_error)?;
    json_to_py(py, &value)
}

/// Composed degree of regularity for a loss/activation pair.
#[pyfunction]
#[pyo3(signature = (loss, activation, batch_norm=false))]
fn dor_compose(loss: &str, activation: &str, batch_norm: bool) -> PyResult<f64> {
    let loss = match loss {
        "l2" => compose::LossKind::L2,
        "huber" => compose::LossKind::Huber,
        other => return Err(value_error(format!("unknown loss {other:?}"))),
    };
    let activation = match activation {
        "tanh" => compose::ActivationKind::Tanh,
        "relu" => compose::ActivationKind::Relu,
        "leaky_relu" => compose::ActivationKind::LeakyRelu,
        other => match other.strip_prefix("relu") {
            Some(k) => compose::ActivationKind::ReluK(
                k.parse().map_err(|_| value_error(format!("unknown activation {other:?}")))?,
            ),
            None => return Err(value_error(format!("unknown activation {other:?}"))),
        },
    };
    Ok(compose::dor_compose(loss, activation, batch_norm))
}

/// Emit the plot-ready data set for one canned figure protocol.
#[pyfunction]
fn write_figure_data(figure: &str, out_dir: &str) -> PyResult<Vec<String>> {
    let id: eoslab::experiment::FigureId = figure.parse().map_err(value_error)?;
    let files = figure_data(id, std::path::Path::new(out_dir)).map_err(value_error)?;
    Ok(files.into_iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn eoslab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObjective>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(regime_constants, m)?)?;
    m.add_function(wrap_pyfunction!(dor_compose, m)?)?;
    m.add_function(wrap_pyfunction!(write_figure_data, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
