//! Pedestrian-navigation simulator and hierarchical imitation learning with
//! learn-from-intervention dataset aggregation.
//!
//! Module map:
//! - [`world`]: seeded 2D world, unicycle robot, scripted pedestrians, sensor.
//! - [`expert`]: rule-based expert, scenario labels, intervention detector.
//! - [`policy`]: shared-trunk policy with a meta head and four sub-heads.
//! - [`algos`]: behavior cloning, vanilla DAgger, learn-from-intervention DAgger.
//! - [`eval`]: successful attempts, time without intervention, dataset growth.
//! - [`experiment`]: config files, end-to-end runs and persisted records.
//! - [`gateway`]: live session server for human interventions.

pub mod action;
pub mod algos;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod expert;
pub mod gateway;
pub mod geometry;
pub mod observation;
pub mod policy;
pub mod rollout;
pub mod world;

pub use action::{Action, ScenarioId};
pub use error::{Error, Result};
pub use observation::Observation;
pub use policy::PolicyBundle;
pub use world::{World, WorldConfig};
