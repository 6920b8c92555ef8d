//! Python bindings: chains, poses, datasets, the three solver families,
//! and distal-teaching models. Mirrors the Rust API with Python-native
//! types (lists of floats, dicts for reports).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ikforge_core::analytical::{self, AnalyticalOptions};
use ikforge_core::bench::{
    self, AnalyticalSolver, DtSolver, NumericalSolver, Thresholds, WarmStartNumericalSolver,
};
use ikforge_core::datasets;
use ikforge_core::distal::{self, MlpSpec, TrainOpts};
use ikforge_core::metrics::{self, LossWeights};
use ikforge_core::numerical::{self, IkStatus, NumericalOptions, Strategy};
use ikforge_core::{builtin_chain, builtin_names, parse_chain_spec, JointConfig};

fn err(e: ikforge_core::Error) -> PyErr {
    match e {
        ikforge_core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_strategy(name: &str) -> PyResult<Strategy> {
    match name {
        "pinv" => Ok(Strategy::Pinv),
        "sqp" => Ok(Strategy::Sqp),
        "combined" => Ok(Strategy::Combined),
        other => Err(PyValueError::new_err(format!("unknown strategy `{other}`"))),
    }
}

/// A target pose: position in metres, orientation as a scalar-first unit
/// quaternion, canonicalized to a non-negative scalar part.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Pose {
    inner: ikforge_core::Pose,
}

#[pymethods]
impl Pose {
    #[new]
    fn new(position: [f64; 3], quat_wxyz: [f64; 4]) -> PyResult<Self> {
        Ok(Self { inner: ikforge_core::Pose::from_components(position, quat_wxyz).map_err(err)? })
    }

    #[getter]
    fn position(&self) -> [f64; 3] {
        self.inner.position.into()
    }

    #[getter]
    fn quaternion(&self) -> [f64; 4] {
        let q = self.inner.orientation().into_inner();
        [q.w, q.i, q.j, q.k]
    }

    fn __repr__(&self) -> String {
        let p = self.inner.position;
        let q = self.inner.orientation().into_inner();
        format!(
            "Pose(position=[{}, {}, {}], quat_wxyz=[{}, {}, {}, {}])",
            p.x, p.y, p.z, q.w, q.i, q.j, q.k
        )
    }
}

/// A serial revolute chain.
#[pyclass(frozen)]
struct Chain {
    inner: ikforge_core::ChainSpec,
}

#[pymethods]
impl Chain {
    /// Load a builtin chain: planar3, arm6, or chain15.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(Self { inner: builtin_chain(name).map_err(err)? })
    }

    /// Parse a chain definition file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner: parse_chain_spec(&text).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    /// Total link length in metres (the reach bound).
    #[getter]
    fn reach(&self) -> f64 {
        self.inner.total_length()
    }

    #[getter]
    fn is_planar(&self) -> bool {
        self.inner.is_planar_z()
    }

    /// Joint limits as (lo, hi) pairs in radians.
    #[getter]
    fn limits(&self) -> Vec<(f64, f64)> {
        self.inner.joints().iter().map(|j| (j.limit_lo, j.limit_hi)).collect()
    }

    /// Forward kinematics: the tool pose of a joint configuration.
    fn fk(&self, q: Vec<f64>) -> PyResult<Pose> {
        let pose = self.inner.forward_kinematics(&JointConfig::new(q)).map_err(err)?;
        Ok(Pose { inner: pose })
    }

    /// Smallest singular value of the task Jacobian at a configuration.
    fn min_singular_value(&self, q: Vec<f64>) -> PyResult<f64> {
        self.inner.min_singular_value(&JointConfig::new(q)).map_err(err)
    }

    /// Position and orientation error of a configuration against a target.
    fn pose_errors(&self, q: Vec<f64>, target: &Pose) -> PyResult<(f64, f64)> {
        let reached = self.inner.forward_kinematics(&JointConfig::new(q)).map_err(err)?;
        Ok((
            metrics::position_error(&reached, &target.inner),
            metrics::orientation_error(&reached, &target.inner),
        ))
    }

    fn __repr__(&self) -> String {
        format!("Chain(name='{}', dof={})", self.inner.name(), self.inner.dof())
    }
}

/// An ordered set of pose samples for one chain.
#[pyclass(frozen)]
struct Dataset {
    inner: datasets::Dataset,
}

#[pymethods]
impl Dataset {
    /// Uniform joint-space samples with forward kinematics attached.
    #[staticmethod]
    fn uniform(chain: &Chain, count: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: datasets::sample_uniform(&chain.inner, count, seed).map_err(err)? })
    }

    /// Near-singular samples (smallest task-Jacobian sigma below 0.01).
    #[staticmethod]
    fn singular(chain: &Chain, count: usize, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: datasets::make_singular_set(&chain.inner, count, seed).map_err(err)? })
    }

    /// Pose-only samples strictly outside the reachable sphere.
    #[staticmethod]
    fn unreachable(chain: &Chain, count: usize, seed: u64) -> PyResult<Self> {
        let range = datasets::default_unreachable_range(chain.inner.name()).ok_or_else(|| {
            PyValueError::new_err(format!(
                "no default unreachable radius band for chain `{}`",
                chain.inner.name()
            ))
        })?;
        Ok(Self {
            inner: datasets::make_unreachable_set(&chain.inner, count, range, seed).map_err(err)?,
        })
    }

    /// Straight Cartesian line with slerped orientations.
    #[staticmethod]
    fn line_trajectory(chain: &Chain, start: &Pose, end: &Pose, waypoints: usize) -> PyResult<Self> {
        Ok(Self {
            inner: datasets::make_line_trajectory(&chain.inner, &start.inner, &end.inner, waypoints)
                .map_err(err)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: PathBuf, chain: &Chain) -> PyResult<Self> {
        Ok(Self { inner: datasets::read_csv(&path, &chain.inner).map_err(err)? })
    }

    fn write_csv(&self, path: PathBuf, chain: &Chain) -> PyResult<()> {
        datasets::write_csv(&self.inner, chain.inner.dof(), &path).map_err(err)
    }

    #[getter]
    fn chain(&self) -> String {
        self.inner.chain.clone()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Target poses, one per sample.
    fn poses(&self) -> Vec<Pose> {
        self.inner.samples.iter().map(|s| Pose { inner: s.pose }).collect()
    }

    /// Joint configurations where attached, None for pose-only samples.
    fn configs(&self) -> Vec<Option<Vec<f64>>> {
        self.inner.samples.iter().map(|s| s.config.as_ref().map(|c| c.angles.clone())).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(chain='{}', kind='{}', len={})",
            self.inner.chain,
            self.inner.kind,
            self.inner.len()
        )
    }
}

/// A trained distal-teaching model.
#[pyclass(frozen)]
struct Model {
    inner: distal::TrainedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: distal::read_model(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        distal::write_model(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn chain(&self) -> String {
        self.inner.chain_name.clone()
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof
    }

    /// Per-epoch (train_loss, val_loss) curve.
    #[getter]
    fn history(&self) -> Vec<(f64, f64)> {
        self.inner.history.clone()
    }

    /// One forward pass: the predicted joint configuration for a target.
    fn predict(&self, target: &Pose) -> Vec<f64> {
        self.inner.predict(&target.inner).angles
    }

    /// Batched prediction, one configuration per target.
    fn predict_batch(&self, targets: Vec<PyRef<'_, Pose>>) -> Vec<Vec<f64>> {
        let poses: Vec<ikforge_core::Pose> = targets.iter().map(|p| p.inner).collect();
        self.inner.predict_batch(&poses).into_iter().map(|c| c.angles).collect()
    }

    fn __repr__(&self) -> String {
        format!("Model(chain='{}', dof={})", self.inner.chain_name, self.inner.dof)
    }
}

/// All closed-form branches for a target, in the fixed branch order.
#[pyfunction]
fn solve_analytical(chain: &Chain, target: &Pose, respect_limits: bool) -> PyResult<Vec<Vec<f64>>> {
    let set = analytical::solve(&chain.inner, &target.inner, &AnalyticalOptions { respect_limits })
        .map_err(err)?;
    Ok(set.configs.into_iter().map(|c| c.angles).collect())
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (chain, target, strategy="combined", max_time_ms=5.0, max_iterations=100,
                    pos_tol=1e-4, ori_tol=1e-4, seed=0, seed_config=None))]
fn solve_numerical(
    py: Python<'_>,
    chain: &Chain,
    target: &Pose,
    strategy: &str,
    max_time_ms: f64,
    max_iterations: usize,
    pos_tol: f64,
    ori_tol: f64,
    seed: u64,
    seed_config: Option<Vec<f64>>,
) -> PyResult<Py<PyDict>> {
    let opts = NumericalOptions {
        max_time: max_time_ms / 1e3,
        max_iterations,
        pos_tolerance: pos_tol,
        ori_tolerance: ori_tol,
        restart_seed: seed,
        strategy: parse_strategy(strategy)?,
        ..NumericalOptions::default()
    };
    let seed_config = seed_config.map(JointConfig::new);
    let result =
        numerical::solve_from(&chain.inner, &target.inner, seed_config.as_ref(), &opts).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item(
        "status",
        match result.status {
            IkStatus::Solved => "solved",
            IkStatus::NotSolved => "not_solved",
            IkStatus::UnreachableBudget => "unreachable_budget",
        },
    )?;
    out.set_item("q", result.config.angles)?;
    out.set_item("eps_pos", result.eps_pos)?;
    out.set_item("eps_ori", result.eps_ori)?;
    out.set_item("iterations", result.iterations)?;
    out.set_item("restarts", result.restarts)?;
    out.set_item("wall_ms", result.wall_time * 1e3)?;
    Ok(out.into())
}

/// Train a distal-teaching model on a dataset. `hidden` defaults to the
/// chain's preset architecture.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (chain, dataset, hidden=None, lr=TrainOpts::default().learning_rate,
                    batch_size=TrainOpts::default().batch_size,
                    max_epochs=TrainOpts::default().max_epochs,
                    validation_fraction=TrainOpts::default().validation_fraction,
                    patience=TrainOpts::default().patience, pos_weight=0.75, lambda_penalty=0.0,
                    seed=0))]
fn train(
    chain: &Chain,
    dataset: &Dataset,
    hidden: Option<Vec<usize>>,
    lr: f64,
    batch_size: usize,
    max_epochs: usize,
    validation_fraction: f64,
    patience: usize,
    pos_weight: f64,
    lambda_penalty: f64,
    seed: u64,
) -> PyResult<Model> {
    let hidden = hidden
        .or_else(|| distal::preset_hidden(chain.inner.name()))
        .unwrap_or_else(|| vec![256, 256]);
    let spec = MlpSpec::for_chain(&chain.inner, hidden, seed);
    let opts = TrainOpts {
        weights: LossWeights::new(pos_weight, lambda_penalty).map_err(err)?,
        learning_rate: lr,
        batch_size,
        max_epochs,
        validation_fraction,
        patience,
        seed,
    };
    Ok(Model { inner: distal::train(&chain.inner, &dataset.inner, &spec, &opts).map_err(err)? })
}

/// Benchmark a solver over a dataset; returns the report as a dict.
#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (chain, dataset, method, model=None, strategy="combined", max_time_ms=5.0,
                    seed=0, pos_threshold=0.01, ori_threshold=0.03, warm_start=false,
                    batch_size=None))]
fn evaluate(
    py: Python<'_>,
    chain: &Chain,
    dataset: &Dataset,
    method: &str,
    model: Option<&Model>,
    strategy: &str,
    max_time_ms: f64,
    seed: u64,
    pos_threshold: f64,
    ori_threshold: f64,
    warm_start: bool,
    batch_size: Option<usize>,
) -> PyResult<Py<PyDict>> {
    let thresholds = Thresholds { pos: pos_threshold, ori: ori_threshold };
    let opts = NumericalOptions {
        max_time: max_time_ms / 1e3,
        restart_seed: seed,
        strategy: parse_strategy(strategy)?,
        ..NumericalOptions::default()
    };
    let need_model =
        || model.ok_or_else(|| PyValueError::new_err("the dt method needs a model"));
    let report = match method {
        "analytical" => {
            bench::evaluate(&chain.inner, &AnalyticalSolver::new(&chain.inner), &dataset.inner, &thresholds)
                .map_err(err)?
        }
        "numerical" => {
            if warm_start {
                let solver = WarmStartNumericalSolver::new(&chain.inner, opts);
                bench::evaluate(&chain.inner, &solver, &dataset.inner, &thresholds).map_err(err)?
            } else {
                let solver = NumericalSolver::new(&chain.inner, opts);
                bench::evaluate(&chain.inner, &solver, &dataset.inner, &thresholds).map_err(err)?
            }
        }
        "dt" => {
            let model = need_model()?;
            match batch_size {
                Some(batch) => {
                    bench::evaluate_dt_batched(&chain.inner, &model.inner, &dataset.inner, &thresholds, batch)
                        .map_err(err)?
                }
                None => {
                    let solver = DtSolver::new(&model.inner, &chain.inner).map_err(err)?;
                    bench::evaluate(&chain.inner, &solver, &dataset.inner, &thresholds).map_err(err)?
                }
            }
        }
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let out = PyDict::new(py);
    out.set_item("solver", report.solver)?;
    out.set_item("dataset", report.dataset)?;
    out.set_item("n_queries", report.n_queries)?;
    out.set_item("solve_rate", report.solve_rate)?;
    out.set_item("eta", report.eta)?;
    out.set_item("eps_pos_mean", report.eps_pos_mean)?;
    out.set_item("eps_pos_std", report.eps_pos_std)?;
    out.set_item("eps_ori_mean", report.eps_ori_mean)?;
    out.set_item("eps_ori_std", report.eps_ori_std)?;
    out.set_item("mean_target_norm", report.mean_target_norm)?;
    out.set_item("time_ms_mean", report.time_ms_mean)?;
    out.set_item("time_ms_std", report.time_ms_std)?;
    out.set_item("discontinuities", report.discontinuities)?;
    Ok(out.into())
}

/// Names of the builtin chains.
#[pyfunction]
fn builtins() -> Vec<String> {
    builtin_names().iter().map(|n| n.to_string()).collect()
}

#[pymodule]
fn _ikforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Pose>()?;
    m.add_class::<Chain>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(solve_analytical, m)?)?;
    m.add_function(wrap_pyfunction!(solve_numerical, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(builtins, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
