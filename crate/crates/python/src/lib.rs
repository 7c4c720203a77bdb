//! Python module `pednav_py`: worlds, the expert, policies, experiments and
//! gateway sessions. Structured results cross the boundary as JSON strings.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pednav::algos::ScheduleKind;
use pednav::config::ExperimentConfig;
use pednav::experiment::{self, ExperimentRecord};
use pednav::expert::{self as oracle, ExpertConfig};
use pednav::gateway::{self, ClientMessage};
use pednav::rollout::EpisodeSpec;
use pednav::{checkpoint, Action, ScenarioId};

fn err(e: pednav::Error) -> PyErr {
    match e {
        pednav::Error::Io(_) | pednav::Error::Json(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn scenario(name: &str) -> PyResult<ScenarioId> {
    name.parse().map_err(err)
}

fn action(steer_bin: usize, speed_bin: usize) -> PyResult<Action> {
    Action::new(steer_bin, speed_bin).map_err(err)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

/// Seeded episode world.
#[pyclass]
struct World {
    inner: pednav::World,
    spec: EpisodeSpec,
}

#[pymethods]
impl World {
    #[new]
    #[pyo3(signature = (scenario_name, road_seed, seed))]
    fn new(scenario_name: &str, road_seed: u64, seed: u64) -> PyResult<Self> {
        let spec = EpisodeSpec::new(scenario(scenario_name)?, road_seed, seed);
        let inner = pednav::World::new(spec.world_config()).map_err(err)?;
        Ok(Self { inner, spec })
    }

    /// Advances one step; returns the event names.
    fn step(&mut self, steer_bin: usize, speed_bin: usize) -> PyResult<Vec<String>> {
        let out = self.inner.step(action(steer_bin, speed_bin)?).map_err(err)?;
        Ok(out.events.iter().map(|e| format!("{e:?}")).collect())
    }

    /// `(x, y, heading)`.
    fn robot(&self) -> (f64, f64, f64) {
        let p = self.inner.robot();
        (p.x, p.y, p.heading)
    }

    fn pedestrians(&self) -> Vec<(f64, f64, f64)> {
        self.inner
            .pedestrians()
            .iter()
            .map(|p| {
                let q = p.pose();
                (q.x, q.y, q.heading)
            })
            .collect()
    }

    fn step_index(&self) -> usize {
        self.inner.step_index()
    }

    fn is_terminated(&self) -> bool {
        self.inner.is_terminated()
    }

    /// Ground-truth scenario label of the current state.
    fn scenario_label(&self) -> String {
        oracle::meta_label(&self.inner).to_string()
    }

    /// `(raster, scalars, (height, width, channels))`; the raster is flat in
    /// row, column, channel order.
    fn observe(&self) -> (Vec<f32>, Vec<f64>, (usize, usize, usize)) {
        let o = self.inner.observe();
        let d = o.dims();
        (o.dense_raster(), o.scalars().to_vec(), (d.height, d.width, d.channels))
    }

    /// Expert action `(steer_bin, speed_bin)` under the ground-truth label.
    fn expert_action(&self) -> (usize, usize) {
        let a = oracle::expert_action(&ExpertConfig::default(), &self.inner, oracle::meta_label(&self.inner));
        (a.steer_bin(), a.speed_bin())
    }

    fn __repr__(&self) -> String {
        format!(
            "World({}, road={}, seed={}, step={})",
            self.spec.scenario,
            self.spec.road_seed,
            self.spec.seed,
            self.inner.step_index()
        )
    }
}

/// Hierarchical policy loaded from a checkpoint.
#[pyclass]
struct Policy {
    inner: pednav::PolicyBundle,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load(path).map_err(err)?,
        })
    }

    /// Untrained policy sized for the default sensor.
    #[staticmethod]
    #[pyo3(signature = (hidden=128, seed=0))]
    fn random(hidden: usize, seed: u64) -> Self {
        let dims = EpisodeSpec::new(ScenarioId::PathFollow, 0, 0)
            .world_config()
            .raster_dims();
        Self {
            inner: pednav::PolicyBundle::new(dims, hidden, seed),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.inner, path).map_err(err)
    }

    /// Checkpoint digest.
    fn digest(&self) -> String {
        checkpoint::digest(&checkpoint::encode(&self.inner))
    }

    /// `(scenario, steer_bin, speed_bin)` for the world's current state.
    fn act(&self, world: &World) -> PyResult<(String, usize, usize)> {
        let (g, a) = self.inner.act(&world.inner.observe()).map_err(err)?;
        Ok((g.to_string(), a.steer_bin(), a.speed_bin()))
    }

    /// Attempt and TWI protocols; returns the evaluation as JSON.
    #[pyo3(signature = (config_toml=""))]
    fn evaluate(&self, py: Python<'_>, config_toml: &str) -> PyResult<String> {
        let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
        let e = py
            .detach(|| experiment::evaluate(&self.inner, &cfg.expert, &cfg.eval))
            .map_err(err)?;
        Ok(to_json(&e))
    }
}

/// Standard configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    ExperimentConfig::default().to_toml_string()
}

/// Runs a full experiment; returns the record as JSON.
#[pyfunction]
#[pyo3(signature = (config_toml="", out_dir=None))]
fn run_experiment(py: Python<'_>, config_toml: &str, out_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    let record = py
        .detach(|| experiment::run_experiment(&cfg, out_dir.as_deref()))
        .map_err(err)?;
    Ok(record.to_json())
}

/// Metric tables for a record JSON.
#[pyfunction]
fn metric_tables(record_json: &str) -> PyResult<String> {
    Ok(experiment::metric_tables(&ExperimentRecord::from_json(record_json).map_err(err)?))
}

/// Live gateway session without the network layer. Messages are JSON.
#[pyclass]
struct Session {
    inner: gateway::Session,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (policy, scenario_name, road_seed, seed, queue_len=50, schedule="linear", session_id="py"))]
    fn new(
        policy: &Policy,
        scenario_name: &str,
        road_seed: u64,
        seed: u64,
        queue_len: usize,
        schedule: &str,
        session_id: &str,
    ) -> PyResult<Self> {
        let cfg = gateway::SessionConfig {
            queue_len,
            schedule: schedule.parse::<ScheduleKind>().map_err(err)?,
            ..gateway::SessionConfig::default()
        };
        let spec = EpisodeSpec::new(scenario(scenario_name)?, road_seed, seed);
        Ok(Self {
            inner: gateway::Session::new(session_id, policy.inner.clone(), spec, cfg).map_err(err)?,
        })
    }

    /// Next tick frame as JSON, or `None` while paused or finished.
    fn tick(&mut self) -> PyResult<Option<String>> {
        Ok(self.inner.tick().map_err(err)?.map(|m| to_json(&m)))
    }

    /// Applies one client message (JSON) and returns the reply (JSON).
    fn handle(&mut self, message: &str) -> String {
        let reply = match gateway::parse_client(message) {
            Ok(m) => self.inner.handle(&m),
            Err(reason) => self.inner.reject_malformed(reason),
        };
        to_json(&reply)
    }

    /// Builds a client message for this session.
    fn message(&self, seq: u64, command_json: &str) -> PyResult<String> {
        let command = serde_json::from_str(command_json)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(to_json(&ClientMessage {
            version: gateway::PROTOCOL_VERSION,
            session: self.inner.id().to_string(),
            seq,
            command,
        }))
    }

    fn mode(&self) -> String {
        to_json(&self.inner.mode()).trim_matches('"').to_string()
    }

    fn delta_len(&self) -> usize {
        self.inner.delta().len()
    }

    /// Header plus every log line.
    fn log(&self) -> String {
        gateway::render_log(&self.inner.log_header(), self.inner.log())
    }
}

/// Replays a session log; returns the number of samples in its delta.
#[pyfunction]
fn reingest(log_text: &str, policy: &Policy) -> PyResult<usize> {
    Ok(gateway::reingest(log_text, &policy.inner).map_err(err)?.len())
}

#[pymodule]
fn pednav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<World>()?;
    m.add_class::<Policy>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(metric_tables, m)?)?;
    m.add_function(wrap_pyfunction!(reingest, m)?)?;
    Ok(())
}
