//! Python module `resc`: maps, search, the flight environment, checkpoints
//! and plan-and-fly.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use resc::env::{EnvConfig, PolicyTag, QuadEnv, StepResult, OBS_DIM};
use resc::fly::{FlyOptions, ModelChoice, PolicySet};
use resc::gridmap::CellIndex;
use resc::metrics::{compute_metrics, RunMetrics};
use resc::ppo::Checkpoint;
use resc::scenario::Scenario;
use resc::search::{PathPolyline, VisibilitySearch};
use resc::trace::Trace;
use resc::{Error, Vec2};

create_exception!(resc, PlanningError, PyRuntimeError, "No collision-free path, or start/goal blocked.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Unreachable | Error::Occupied { .. } | Error::OutOfBounds(_) => PlanningError::new_err(e.to_string()),
        Error::Io { .. } | Error::MissingModel(_) => PyIOError::new_err(e.to_string()),
        Error::Singular(_) | Error::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn v2(p: (f64, f64)) -> Vec2 {
    Vec2::new(p.0, p.1)
}

#[pyclass(name = "OccupancyGrid", module = "resc")]
struct PyGrid(resc::gridmap::OccupancyGrid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (width, height, resolution, origin = (0.0, 0.0)))]
    fn new(width: usize, height: usize, resolution: f64, origin: (f64, f64)) -> PyResult<Self> {
        resc::gridmap::OccupancyGrid::new(width, height, resolution, v2(origin))
            .map(Self)
            .map_err(to_py)
    }

    /// Parses the text map format (`width height resolution ox oy` then rows).
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        resc::gridmap::OccupancyGrid::parse(text).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        resc::gridmap::OccupancyGrid::load(&path).map(Self).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn resolution(&self) -> f64 {
        self.0.resolution()
    }

    fn is_occupied(&self, x: i32, y: i32) -> bool {
        self.0.is_occupied(CellIndex::new(x, y))
    }

    fn set(&mut self, x: i32, y: i32, occupied: bool) {
        self.0.set(CellIndex::new(x, y), occupied);
    }

    fn fill_disc(&mut self, center: (f64, f64), radius: f64) {
        self.0.fill_disc(v2(center), radius);
    }

    fn fill_box(&mut self, min: (f64, f64), max: (f64, f64)) {
        self.0.fill_box(v2(min), v2(max));
    }

    fn world_to_cell(&self, p: (f64, f64)) -> (i32, i32) {
        let c = self.0.world_to_cell(v2(p));
        (c.x, c.y)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    /// Inflates obstacles by `inflation` meters and computes the distance field.
    #[pyo3(signature = (inflation = 0.0))]
    fn esdf(&self, inflation: f64) -> PyEsdf {
        PyEsdf(resc::gridmap::build_esdf(&self.0, inflation))
    }
}

#[pyclass(name = "EsdfMap", module = "resc")]
struct PyEsdf(resc::gridmap::EsdfMap);

#[pymethods]
impl PyEsdf {
    /// Bilinear distance to the nearest inflated obstacle, m (0 outside).
    fn distance_at(&self, p: (f64, f64)) -> f64 {
        self.0.distance_at(v2(p))
    }

    fn is_corner(&self, x: i32, y: i32) -> bool {
        self.0.is_corner(CellIndex::new(x, y))
    }

    fn visible(&self, a: (i32, i32), b: (i32, i32)) -> PyResult<bool> {
        self.0
            .visible_check(CellIndex::new(a.0, a.1), CellIndex::new(b.0, b.1))
            .map_err(to_py)
    }

    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }
}

/// Shortest visibility path. Returns a dict with `path`, `length` and
/// `expansions`. `r_max` defaults to the larger map side.
#[pyfunction]
#[pyo3(signature = (map, start, goal, r_max = None, seed = 0))]
fn search<'py>(
    py: Python<'py>,
    map: &PyEsdf,
    start: (f64, f64),
    goal: (f64, f64),
    r_max: Option<i32>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = map.0.grid();
    let r = r_max.unwrap_or(g.width().max(g.height()) as i32);
    let out = py
        .detach(|| VisibilitySearch::new(r).run(&map.0, v2(start), v2(goal), seed))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    let pts: Vec<(f64, f64)> = out.path.waypoints.iter().map(|p| (p.x, p.y)).collect();
    d.set_item("path", pts)?;
    d.set_item("length", out.path.length())?;
    d.set_item("expansions", out.stats.expansions)?;
    Ok(d)
}

/// Control points every `spacing` meters along a polyline, from the point
/// nearest to `current`.
#[pyfunction]
#[pyo3(signature = (path, current, spacing = 1.0))]
fn control_points(path: Vec<(f64, f64)>, current: (f64, f64), spacing: f64) -> PyResult<Vec<(f64, f64)>> {
    if path.is_empty() {
        return Err(PyValueError::new_err("path is empty"));
    }
    let poly = PathPolyline {
        waypoints: path.into_iter().map(v2).collect(),
    };
    let cps = resc::search::sample_control_points(&poly, v2(current), spacing, usize::MAX).map_err(to_py)?;
    Ok(cps.points.iter().map(|p| (p.x, p.y)).collect())
}

fn env_config(tag: &str, toml: Option<&str>) -> PyResult<EnvConfig> {
    match toml {
        Some(t) => EnvConfig::from_toml(t).map_err(to_py),
        None => Ok(EnvConfig::for_tag(tag.parse::<PolicyTag>().map_err(to_py)?)),
    }
}

/// Randomized training environment for one policy tag.
#[pyclass(name = "Env", module = "resc")]
struct PyEnv(QuadEnv);

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (tag = "free", seed = 0, config = None))]
    fn new(tag: &str, seed: u64, config: Option<&str>) -> PyResult<Self> {
        QuadEnv::new(env_config(tag, config)?, seed).map(Self).map_err(to_py)
    }

    #[classattr]
    fn obs_dim() -> usize {
        OBS_DIM
    }

    fn reset(&mut self, seed: u64) -> PyResult<Vec<f64>> {
        Ok(self.0.reset(seed).map_err(to_py)?.as_slice().to_vec())
    }

    /// Steps with a normalized action in [-1, 1]^4. Returns
    /// `(obs, reward, terminated, truncated, info)`.
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, bool, Bound<'py, PyDict>)> {
        let r: StepResult = self.0.step_action(&action).map_err(to_py)?;
        let info = PyDict::new(py);
        let b = r.info.reward;
        for (k, v) in [
            ("r_p", b.r_p),
            ("r_d", b.r_d),
            ("r_v", b.r_v),
            ("collision", b.collision),
            ("smooth", b.smooth),
            ("r_f", b.finish),
        ] {
            info.set_item(k, v)?;
        }
        info.set_item("passed_cp", r.info.passed_cp)?;
        info.set_item("finished", r.info.finished)?;
        info.set_item("crash", r.info.crash.map(|c| format!("{c:?}").to_lowercase()))?;
        info.set_item("cp_index", r.info.cp_index)?;
        Ok((r.obs.as_slice().to_vec(), r.reward, r.terminated, r.truncated, info))
    }

    fn position(&self) -> (f64, f64, f64) {
        let p = self.0.state().position;
        (p.x, p.y, p.z)
    }

    fn control_points(&self) -> Vec<(f64, f64, f64)> {
        self.0.scene().control_points.iter().map(|c| (c.x, c.y, c.z)).collect()
    }
}

/// A trained actor loaded from a checkpoint JSON file.
#[pyclass(name = "Policy", module = "resc")]
struct PyPolicy(resc::ppo::Policy);

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(to_py)?;
        ck.check_layout(resc::env::layout_hash(), OBS_DIM).map_err(to_py)?;
        ck.policy().map(Self).map_err(to_py)
    }

    /// Mean action for a raw observation.
    fn act(&self, obs: Vec<f64>) -> PyResult<Vec<f64>> {
        if obs.len() != OBS_DIM {
            return Err(PyValueError::new_err(format!("expected {OBS_DIM} values, got {}", obs.len())));
        }
        Ok(self.0.act_deterministic(&obs))
    }

    fn value(&self, obs: Vec<f64>) -> PyResult<f64> {
        if obs.len() != OBS_DIM {
            return Err(PyValueError::new_err(format!("expected {OBS_DIM} values, got {}", obs.len())));
        }
        Ok(self.0.value(&obs))
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &RunMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("success", m.success)?;
    d.set_item("time_span", m.time_span)?;
    d.set_item("energy", m.energy)?;
    d.set_item("min_clearance", m.min_clearance)?;
    d.set_item("path_length", m.path_length)?;
    Ok(d)
}

/// Plans and flies a built-in scenario name or scenario TOML path with the
/// checkpoints in `checkpoints`. Returns `outcome`, `metrics` and `trace_csv`.
#[pyfunction]
#[pyo3(signature = (scenario, checkpoints = PathBuf::from("checkpoints"), seed = 0, model = "auto"))]
fn fly<'py>(
    py: Python<'py>,
    scenario: &str,
    checkpoints: PathBuf,
    seed: u64,
    model: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = Scenario::resolve(scenario).map_err(to_py)?;
    let choice: ModelChoice = model.parse().map_err(to_py)?;
    let policies = PolicySet::load_dir(&checkpoints, choice).map_err(to_py)?;
    let opts = FlyOptions {
        seed,
        model: choice,
        ..FlyOptions::default()
    };
    let flight = py
        .detach(|| resc::fly::fly(&sc, &EnvConfig::default(), &policies, &opts))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("outcome", flight.outcome.to_string())?;
    d.set_item("metrics", metrics_dict(py, &flight.metrics)?)?;
    d.set_item("trace_csv", flight.trace.to_csv())?;
    Ok(d)
}

/// Metrics of a trace CSV; clearance is measured against `scenario` if given.
#[pyfunction]
#[pyo3(signature = (trace_csv, scenario = None))]
fn metrics<'py>(py: Python<'py>, trace_csv: &str, scenario: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let trace = Trace::parse(trace_csv).map_err(to_py)?;
    let map = match scenario {
        Some(s) => Some(resc::gridmap::build_esdf(
            &Scenario::resolve(s).and_then(|s| s.raw_grid()).map_err(to_py)?,
            0.0,
        )),
        None => None,
    };
    metrics_dict(py, &compute_metrics(&trace, map.as_ref()))
}

#[pymodule]
#[pyo3(name = "resc")]
fn resc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyEsdf>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(control_points, m)?)?;
    m.add_function(wrap_pyfunction!(fly, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add("PlanningError", m.py().get_type::<PlanningError>())?;
    Ok(())
}
