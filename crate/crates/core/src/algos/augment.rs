use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::{ScenarioId, N_STEER};
use crate::error::Result;
use crate::expert::{expert_action, ExpertConfig};
use crate::policy::{soft_label, LabeledSample, Provenance, SoftTarget, Target};
use crate::world::World;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub mirror: bool,
    /// Standard deviation of the steering-center jitter applied to mirrored
    /// targets, in bins.
    pub mirror_jitter: f64,
    /// Virtual viewpoints as (lateral meters, heading radians).
    pub virtual_offsets: Vec<[f64; 2]>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mirror: true,
            mirror_jitter: 0.25,
            virtual_offsets: vec![[0.5, 0.0], [-0.5, 0.0]],
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            mirror: false,
            mirror_jitter: 0.0,
            virtual_offsets: Vec::new(),
        }
    }
}

/// Steering distribution reversed about the center bin, then shifted by
/// `shift` bins with linear interpolation and renormalized.
pub fn reflect_steer(steer: &[f64; N_STEER], shift: f64) -> [f64; N_STEER] {
    let mut rev = *steer;
    rev.reverse();
    if shift == 0.0 {
        return rev;
    }
    let mut out = [0.0; N_STEER];
    for (i, o) in out.iter_mut().enumerate() {
        let pos = i as f64 - shift;
        let lo = pos.floor();
        let frac = pos - lo;
        let at = |j: f64| {
            if j < 0.0 || j > (N_STEER - 1) as f64 {
                0.0
            } else {
                rev[j as usize]
            }
        };
        *o = (1.0 - frac) * at(lo) + frac * at(lo + 1.0);
    }
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return rev;
    }
    out.map(|v| v / total)
}

/// Mirror image of an action sample with a given steering shift. Meta
/// samples are mirrored in the observation only.
pub fn mirror_with_shift(sample: &LabeledSample, shift: f64) -> LabeledSample {
    let target = match sample.target {
        Target::Action(t) => Target::Action(SoftTarget {
            steer: reflect_steer(&t.steer, shift),
            ..t
        }),
        meta @ Target::Meta { .. } => meta,
    };
    LabeledSample {
        observation: sample.observation.mirrored(),
        target,
        scenario: sample.scenario,
        provenance: Provenance::Augmented,
        iteration: sample.iteration,
    }
}

/// Mirror augmentation with Gaussian jitter of the steering center.
pub fn mirror_augment<R: Rng>(sample: &LabeledSample, jitter_std: f64, rng: &mut R) -> LabeledSample {
    let shift = if jitter_std > 0.0 {
        Normal::new(0.0, jitter_std).expect("finite std").sample(rng)
    } else {
        0.0
    };
    mirror_with_shift(sample, shift)
}

/// Expert-labeled samples seen from displaced viewpoints. The label is the
/// expert's action for scenario `scenario` at the displaced pose. Offsets
/// outside the path are skipped.
#[allow(clippy::too_many_arguments)]
pub fn virtual_offset_samples(
    world: &World,
    cfg: &ExpertConfig,
    scenario: ScenarioId,
    offsets: &[[f64; 2]],
    steer_sigma: f64,
    speed_sigma: f64,
    iteration: usize,
) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::with_capacity(offsets.len());
    for &[lat, head] in offsets {
        if lat.abs() >= world.half_width() {
            continue;
        }
        let obs = world.virtual_offset_observe(lat, head)?;
        let shifted = world.with_robot_pose(world.displaced_pose(lat, head));
        let action = expert_action(cfg, &shifted, scenario);
        out.push(LabeledSample::action(
            obs,
            soft_label(action, steer_sigma, speed_sigma),
            scenario,
            Provenance::Augmented,
            iteration,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::world::spawn_scenario;

    fn sample(steer: usize) -> LabeledSample {
        let w = World::new(spawn_scenario(ScenarioId::Confront, 5)).unwrap();
        LabeledSample::action(
            w.observe(),
            soft_label(Action::new(steer, 1).unwrap(), 0.0, 0.0),
            ScenarioId::Confront,
            Provenance::Expert,
            0,
        )
    }

    #[test]
    fn reflection_fixed_point_and_index_map() {
        let s = sample(3);
        assert_eq!(mirror_with_shift(&s, 0.0).action_target(), s.action_target());
        let m = mirror_with_shift(&sample(1), 0.0);
        assert_eq!(m.action_target().unwrap().steer_mode(), 5);
        assert_eq!(m.action_target().unwrap().speed, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn double_mirror_is_identity() {
        for b in 0..N_STEER {
            let s = sample(b);
            let twice = mirror_with_shift(&mirror_with_shift(&s, 0.0), 0.0);
            assert_eq!(twice.observation, s.observation);
            assert_eq!(twice.target, s.target);
            assert_eq!(twice.scenario, s.scenario);
        }
    }

    #[test]
    fn shifted_target_stays_normalized() {
        let s = soft_label(Action::new(0, 0).unwrap(), 0.5, 0.0);
        for shift in [-0.7, -0.25, 0.3, 0.9] {
            let r = reflect_steer(&s.steer, shift);
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|v| *v >= 0.0));
        }
    }
}
