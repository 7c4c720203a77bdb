use serde::{Deserialize, Serialize};

use crate::action::{Action, ScenarioId, N_SPEED, N_STEER};
use crate::observation::Observation;

/// Single-peak target over the action bins plus a loss multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub steer: [f64; N_STEER],
    pub speed: [f64; N_SPEED],
    pub weight: f64,
}

impl SoftTarget {
    /// Convex combination `(1 - t) * self + t * other`; weight is left at 1.
    pub fn mix(&self, other: &SoftTarget, t: f64) -> SoftTarget {
        let mut out = *self;
        for (o, b) in out.steer.iter_mut().zip(other.steer) {
            *o = (1.0 - t) * *o + t * b;
        }
        for (o, b) in out.speed.iter_mut().zip(other.speed) {
            *o = (1.0 - t) * *o + t * b;
        }
        out.weight = 1.0;
        out
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Bin with the largest steering mass (lowest index on ties).
    pub fn steer_mode(&self) -> usize {
        argmax(&self.steer)
    }

    pub fn speed_mode(&self) -> usize {
        argmax(&self.speed)
    }

    pub fn is_valid(&self) -> bool {
        let ok = |v: &[f64]| {
            v.iter().all(|p| *p >= 0.0 && p.is_finite()) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        ok(&self.steer) && ok(&self.speed) && self.weight >= 0.0 && self.weight.is_finite()
    }
}

/// Discretized Gaussian over `n` bins centered at `center` with standard
/// deviation `sigma` (in bins), renormalized. `sigma == 0` is one-hot.
pub fn discretized_gaussian<const N: usize>(center: f64, sigma: f64) -> [f64; N] {
    let mut out = [0.0; N];
    if sigma <= 0.0 {
        let c = center.round().clamp(0.0, (N - 1) as f64) as usize;
        out[c] = 1.0;
        return out;
    }
    let mut total = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let d = i as f64 - center;
        *o = (-(d * d) / (2.0 * sigma * sigma)).exp();
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Soft label for an action: Gaussian over steering bins with `steer_sigma`
/// and over speed bins with `speed_sigma`; weight 1.
pub fn soft_label(action: Action, steer_sigma: f64, speed_sigma: f64) -> SoftTarget {
    SoftTarget {
        steer: discretized_gaussian(action.steer_bin() as f64, steer_sigma),
        speed: discretized_gaussian(action.speed_bin() as f64, speed_sigma),
        weight: 1.0,
    }
}

/// Lowest index among the maxima.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// Meta-controller target (one-hot over scenarios for D_h).
    Meta {
        dist: [f64; ScenarioId::COUNT],
        weight: f64,
    },
    /// Sub-policy target (for D_g).
    Action(SoftTarget),
}

impl Target {
    pub fn meta_one_hot(scenario: ScenarioId) -> Self {
        let mut dist = [0.0; ScenarioId::COUNT];
        dist[scenario.index()] = 1.0;
        Target::Meta { dist, weight: 1.0 }
    }

    pub fn weight(&self) -> f64 {
        match self {
            Target::Meta { weight, .. } => *weight,
            Target::Action(t) => t.weight,
        }
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Expert,
    LearnerBacktracked,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub observation: Observation,
    pub target: Target,
    pub scenario: ScenarioId,
    pub provenance: Provenance,
    pub iteration: usize,
}

impl LabeledSample {
    pub fn meta(observation: Observation, scenario: ScenarioId, iteration: usize) -> Self {
        Self {
            observation,
            target: Target::meta_one_hot(scenario),
            scenario,
            provenance: Provenance::Expert,
            iteration,
        }
    }

    pub fn action(
        observation: Observation,
        target: SoftTarget,
        scenario: ScenarioId,
        provenance: Provenance,
        iteration: usize,
    ) -> Self {
        Self {
            observation,
            target: Target::Action(target),
            scenario,
            provenance,
            iteration,
        }
    }

    pub fn action_target(&self) -> Option<&SoftTarget> {
        match &self.target {
            Target::Action(t) => Some(t),
            Target::Meta { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::CENTER_STEER;

    #[test]
    fn zero_sigma_is_one_hot() {
        let t = soft_label(Action::new(3, 1).unwrap(), 0.0, 0.0);
        assert_eq!(t.steer, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.speed, [0.0, 1.0, 0.0]);
        assert_eq!(t.weight, 1.0);
    }

    #[test]
    fn mode_sits_on_action_bin() {
        for s in 0..N_STEER {
            for sigma in [0.0, 0.3, 0.5, 1.0, 2.0, 5.0] {
                let t = soft_label(Action::new(s, 0).unwrap(), sigma, sigma);
                assert_eq!(t.steer_mode(), s, "bin {s} sigma {sigma}");
                assert!(t.is_valid());
            }
        }
    }

    #[test]
    fn unit_sigma_center_matches_direct_summation() {
        // Direct evaluation of exp(-k^2/2) over offsets -3..=3.
        let raw: Vec<f64> = (-3i32..=3).map(|k| (-(k * k) as f64 / 2.0).exp()).collect();
        let z: f64 = raw.iter().sum();
        let t = soft_label(Action::new(CENTER_STEER, 0).unwrap(), 1.0, 0.0);
        for (i, r) in raw.iter().enumerate() {
            assert!((t.steer[i] - r / z).abs() < 1e-15);
        }
        for k in 1..=3 {
            assert_eq!(t.steer[CENTER_STEER - k], t.steer[CENTER_STEER + k]);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }
}
