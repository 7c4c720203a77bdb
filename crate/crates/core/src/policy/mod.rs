//! Shared-trunk policy: one rectified hidden layer feeding a 4-way meta head
//! and four sub-heads, each with a steering and a speed softmax group.
//!
//! All parameters live in one flat vector. Layout, in order:
//!
//! | block          | shape                    | storage                 |
//! |----------------|--------------------------|-------------------------|
//! | trunk weights  | input_dim x hidden       | row-major (per input)   |
//! | trunk bias     | hidden                   |                         |
//! | meta weights   | 4 x hidden               | row-major (per output)  |
//! | meta bias      | 4                        |                         |
//! | per scenario g | steer 7 x hidden, bias 7, speed 3 x hidden, bias 3 |  |

mod target;
mod train;

pub use target::{
    argmax, discretized_gaussian, soft_label, LabeledSample, Provenance, SoftTarget, Target,
};
pub use train::{
    compare_gradients, gradient_check, loss_and_gradient, sample_loss, train, GradientReport,
    TrainConfig, TrainingReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ScenarioId, N_SPEED, N_STEER};
use crate::error::{Error, Result};
use crate::observation::{Observation, RasterDims};

pub const DEFAULT_HIDDEN: usize = 128;

/// Which head a training call or gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    Meta,
    Scenario(ScenarioId),
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Head::Meta => f.write_str("meta"),
            Head::Scenario(s) => write!(f, "sub:{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct SubLayout {
    pub steer_w: usize,
    pub steer_b: usize,
    pub speed_w: usize,
    pub speed_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub input: usize,
    pub hidden: usize,
    pub trunk_w: usize,
    pub trunk_b: usize,
    pub meta_w: usize,
    pub meta_b: usize,
    pub sub: [SubLayout; ScenarioId::COUNT],
    pub total: usize,
}

impl Layout {
    fn new(input: usize, hidden: usize) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let o = off;
            off += n;
            o
        };
        let trunk_w = take(input * hidden);
        let trunk_b = take(hidden);
        let meta_w = take(ScenarioId::COUNT * hidden);
        let meta_b = take(ScenarioId::COUNT);
        let sub = std::array::from_fn(|_| SubLayout {
            steer_w: take(N_STEER * hidden),
            steer_b: take(N_STEER),
            speed_w: take(N_SPEED * hidden),
            speed_b: take(N_SPEED),
        });
        Self {
            input,
            hidden,
            trunk_w,
            trunk_b,
            meta_w,
            meta_b,
            sub,
            total: off,
        }
    }

    /// Parameter range `[start, end)` owned by a head (trunk excluded).
    pub fn head_range(&self, head: Head) -> (usize, usize) {
        match head {
            Head::Meta => (self.meta_w, self.meta_b + ScenarioId::COUNT),
            Head::Scenario(g) => {
                let s = self.sub[g.index()];
                (s.steer_w, s.speed_b + N_SPEED)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    dims: RasterDims,
    layout: Layout,
    params: Vec<f64>,
}

/// Raw pre-softmax outputs of every head.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub meta: [f64; ScenarioId::COUNT],
    pub steer: [[f64; N_STEER]; ScenarioId::COUNT],
    pub speed: [[f64; N_SPEED]; ScenarioId::COUNT],
}

/// Softmax outputs of every head.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scenario: [f64; ScenarioId::COUNT],
    pub steer: [[f64; N_STEER]; ScenarioId::COUNT],
    pub speed: [[f64; N_SPEED]; ScenarioId::COUNT],
}

impl Prediction {
    pub fn from_logits(l: &Logits) -> Self {
        Self {
            scenario: softmax(&l.meta),
            steer: std::array::from_fn(|g| softmax(&l.steer[g])),
            speed: std::array::from_fn(|g| softmax(&l.speed[g])),
        }
    }

    /// Meta argmax, then the selected sub-head's argmax steer and speed.
    /// Ties go to the lower index.
    pub fn decide(&self) -> (ScenarioId, Action) {
        decide(&self.scenario, &self.steer, &self.speed)
    }
}

impl Logits {
    /// Softmax is monotone, so deciding on logits equals deciding on
    /// probabilities.
    pub fn decide(&self) -> (ScenarioId, Action) {
        decide(&self.meta, &self.steer, &self.speed)
    }
}

fn decide(
    meta: &[f64; ScenarioId::COUNT],
    steer: &[[f64; N_STEER]; ScenarioId::COUNT],
    speed: &[[f64; N_SPEED]; ScenarioId::COUNT],
) -> (ScenarioId, Action) {
    let g = argmax(meta);
    let action = Action::new(argmax(&steer[g]), argmax(&speed[g])).expect("argmax in range");
    (ScenarioId::from_index(g).expect("meta index"), action)
}

/// Numerically stable softmax.
pub fn softmax<const N: usize>(z: &[f64; N]) -> [f64; N] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N];
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

impl PolicyBundle {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(dims: RasterDims, hidden: usize, seed: u64) -> Self {
        let layout = Layout::new(dims.input_dim(), hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let mut fill = |start: usize, len: usize, fan_in: usize, rng: &mut ChaCha8Rng| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[start..start + len] {
                *p = rng.random_range(-bound..bound);
            }
        };
        fill(layout.trunk_w, layout.input * hidden, layout.input, &mut rng);
        fill(layout.trunk_b, hidden, layout.input, &mut rng);
        fill(layout.meta_w, ScenarioId::COUNT * hidden, hidden, &mut rng);
        fill(layout.meta_b, ScenarioId::COUNT, hidden, &mut rng);
        for s in layout.sub {
            fill(s.steer_w, N_STEER * hidden, hidden, &mut rng);
            fill(s.steer_b, N_STEER, hidden, &mut rng);
            fill(s.speed_w, N_SPEED * hidden, hidden, &mut rng);
            fill(s.speed_b, N_SPEED, hidden, &mut rng);
        }
        Self {
            dims,
            layout,
            params,
        }
    }

    /// Sets every output layer to zero, making all distributions uniform.
    pub fn with_zeroed_heads(mut self) -> Self {
        let start = self.layout.meta_w;
        self.params[start..].fill(0.0);
        self
    }

    pub(crate) fn from_parts(dims: RasterDims, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(dims.input_dim(), hidden);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            dims,
            layout,
            params,
        })
    }

    pub fn dims(&self) -> RasterDims {
        self.dims
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_dims(&self, obs: &Observation) -> Result<()> {
        if obs.input_dim() != self.layout.input {
            return Err(Error::DimensionMismatch {
                expected: self.layout.input,
                got: obs.input_dim(),
            });
        }
        Ok(())
    }

    /// Trunk pre-activations for an observation.
    pub(crate) fn trunk_pre(&self, obs: &Observation) -> Vec<f64> {
        let h = self.layout.hidden;
        let mut pre = self.params[self.layout.trunk_b..self.layout.trunk_b + h].to_vec();
        for (i, x) in obs.features() {
            let col = &self.params[self.layout.trunk_w + i * h..self.layout.trunk_w + (i + 1) * h];
            for (p, w) in pre.iter_mut().zip(col) {
                *p += x * w;
            }
        }
        pre
    }

    pub(crate) fn affine<const N: usize>(&self, w: usize, b: usize, hidden: &[f64]) -> [f64; N] {
        let h = self.layout.hidden;
        let mut out = [0.0; N];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.params[w + k * h..w + (k + 1) * h];
            *o = self.params[b + k] + row.iter().zip(hidden).map(|(a, x)| a * x).sum::<f64>();
        }
        out
    }

    pub fn logits(&self, obs: &Observation) -> Result<Logits> {
        self.check_dims(obs)?;
        let hidden: Vec<f64> = self.trunk_pre(obs).into_iter().map(|v| v.max(0.0)).collect();
        let l = &self.layout;
        Ok(Logits {
            meta: self.affine(l.meta_w, l.meta_b, &hidden),
            steer: std::array::from_fn(|g| self.affine(l.sub[g].steer_w, l.sub[g].steer_b, &hidden)),
            speed: std::array::from_fn(|g| self.affine(l.sub[g].speed_w, l.sub[g].speed_b, &hidden)),
        })
    }

    /// One forward pass through every head.
    pub fn predict(&self, obs: &Observation) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits(obs)?))
    }

    /// Scenario chosen by the meta head and the action of that scenario's
    /// sub-head.
    pub fn act(&self, obs: &Observation) -> Result<(ScenarioId, Action)> {
        Ok(self.logits(obs)?.decide())
    }

    /// Action of a given sub-head, bypassing the meta head.
    pub fn act_with(&self, obs: &Observation, scenario: ScenarioId) -> Result<Action> {
        let l = self.logits(obs)?;
        let g = scenario.index();
        Ok(Action::new(argmax(&l.steer[g]), argmax(&l.speed[g])).expect("argmax in range"))
    }
}
