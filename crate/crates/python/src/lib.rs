//! Python access to the topology tools and the experiment harness.
//!
//! Trajectories cross the boundary as lists of `(x, y)` tuples and
//! rectangles as `(xmin, ymin, xmax, ymax)` tuples.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use eieo::curriculum::Method;
use eieo::envs::{rollout as env_rollout, NoiseMode, BARRIER_PENALTY};
use eieo::geometry::{ConvexPolygon, Point2, RegionSet};
use eieo::harness::{run_train, run_transfer, Experiment, ExperimentConfig};
use eieo::homotopy::{self, Anchors, Trajectory};
use eieo::rl::Checkpoint;
use eieo::wasserstein::{self, EmpiricalDistribution};
use eieo::Error;

type Rect = (f64, f64, f64, f64);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. }
        | Error::MissingCheckpoint(_)
        | Error::MissingData(_)
        | Error::Parse { .. }
        | Error::UnequalSupport(..)
        | Error::CollidingTrajectory
        | Error::LengthMismatch(..)
        | Error::InvalidTrajectory(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn trajectory(points: &[(f64, f64)]) -> PyResult<Trajectory> {
    Trajectory::new(points.iter().map(|&(x, y)| Point2::new(x, y)).collect()).map_err(py_err)
}

fn barrier(rects: &[Rect]) -> PyResult<RegionSet> {
    let parts = rects
        .iter()
        .map(|&(x0, y0, x1, y1)| ConvexPolygon::rect(x0, y0, x1, y1))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    RegionSet::new(parts, BARRIER_PENALTY).map_err(py_err)
}

/// Anchors default to the endpoints of `reference`.
fn anchors(reference: &Trajectory, start: Option<(f64, f64)>, goal: Option<(f64, f64)>) -> Anchors {
    Anchors {
        start: start.map_or(reference.first(), |(x, y)| Point2::new(x, y)),
        goal: goal.map_or(reference.last(), |(x, y)| Point2::new(x, y)),
    }
}

fn load_experiment(config: PathBuf, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> PyResult<Experiment> {
    let mut cfg = ExperimentConfig::load(&config).map_err(py_err)?;
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
    }
    if let Some(out) = out {
        cfg.output = out;
    }
    Experiment::new(cfg).map_err(py_err)
}

/// Homotopy-class label of a path around rectangular barriers.
#[pyfunction]
#[pyo3(signature = (path, rects, start=None, goal=None))]
fn signature(path: Vec<(f64, f64)>, rects: Vec<Rect>, start: Option<(f64, f64)>, goal: Option<(f64, f64)>) -> PyResult<String> {
    let t = trajectory(&path)?;
    let a = anchors(&t, start, goal);
    homotopy::signature(&t, &barrier(&rects)?, a).map(|s| s.label()).map_err(py_err)
}

/// Whether two paths lie in the same homotopy class.
#[pyfunction]
#[pyo3(signature = (first, second, rects, start=None, goal=None))]
fn same_class(
    first: Vec<(f64, f64)>,
    second: Vec<(f64, f64)>,
    rects: Vec<Rect>,
    start: Option<(f64, f64)>,
    goal: Option<(f64, f64)>,
) -> PyResult<bool> {
    let (t1, t2) = (trajectory(&first)?, trajectory(&second)?);
    let a = anchors(&t1, start, goal);
    homotopy::same_class(&t1, &t2, &barrier(&rects)?, a).map_err(py_err)
}

/// Bottleneck distance between two equal-size trajectory sets, with the
/// optimal assignment `first[i] -> second[assignment[i]]`.
#[pyfunction]
#[pyo3(signature = (first, second, length=129))]
fn w_infinity(first: Vec<Vec<(f64, f64)>>, second: Vec<Vec<(f64, f64)>>, length: usize) -> PyResult<(f64, Vec<usize>)> {
    let set = |s: &[Vec<(f64, f64)>]| s.iter().map(|p| trajectory(p)).collect::<PyResult<Vec<_>>>();
    let mu = EmpiricalDistribution::new(&set(&first)?, length).map_err(py_err)?;
    let nu = EmpiricalDistribution::new(&set(&second)?, length).map_err(py_err)?;
    let m = wasserstein::w_infinity(&mu, &nu).map_err(py_err)?;
    Ok((m.value, m.assignment))
}

/// Validated configuration, re-serialised as TOML with defaults filled in.
#[pyfunction]
fn load_config(path: PathBuf) -> PyResult<String> {
    ExperimentConfig::load(&path).and_then(|c| c.to_toml_string()).map_err(py_err)
}

/// One episode of a checkpointed policy in the configured target task.
/// Returns the visited positions and the return.
#[pyfunction]
#[pyo3(signature = (config, checkpoint, seed=0, noise="mean"))]
fn rollout(py: Python<'_>, config: PathBuf, checkpoint: PathBuf, seed: u64, noise: &str) -> PyResult<(Vec<(f64, f64)>, f64)> {
    let mode = match noise {
        "fresh" => NoiseMode::Fresh,
        "frozen" => NoiseMode::Frozen,
        "mean" => NoiseMode::Mean,
        other => return Err(PyValueError::new_err(format!("unknown noise mode `{other}`"))),
    };
    let exp = load_experiment(config, None, None)?;
    let policy = Checkpoint::load(&checkpoint).map_err(py_err)?.policy;
    let ep = py
        .detach(|| env_rollout(&exp.env, &policy, &exp.target_reward, seed, mode))
        .map_err(py_err)?;
    Ok((ep.trajectory.states().iter().map(|p| (p.x, p.y)).collect(), ep.ret))
}

/// Trains and writes source checkpoints; returns `(seed, mean_return)`.
#[pyfunction]
#[pyo3(signature = (config, seeds=None, out=None))]
fn train(py: Python<'_>, config: PathBuf, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> PyResult<Vec<(u64, f64)>> {
    let exp = load_experiment(config, seeds, out)?;
    let sources = py.detach(|| run_train(&exp, &exp.config.seeds)).map_err(py_err)?;
    Ok(sources.iter().map(|s| (s.seed, s.mean_return)).collect())
}

/// Runs the method × seed grid and returns the results table as CSV.
#[pyfunction]
#[pyo3(signature = (config, seeds=None, out=None))]
fn transfer(py: Python<'_>, config: PathBuf, seeds: Option<Vec<u64>>, out: Option<PathBuf>) -> PyResult<String> {
    let exp = load_experiment(config, seeds, out)?;
    let summary = py.detach(|| run_transfer(&exp, &exp.config.seeds)).map_err(py_err)?;
    Ok(summary.table.to_csv())
}

/// Names accepted in a configuration's `methods` list.
#[pyfunction]
fn methods() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.name()).collect()
}

#[pymodule]
fn eieo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(signature, m)?)?;
    m.add_function(wrap_pyfunction!(same_class, m)?)?;
    m.add_function(wrap_pyfunction!(w_infinity, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(transfer, m)?)?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    Ok(())
}
