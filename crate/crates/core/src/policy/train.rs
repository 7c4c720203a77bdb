use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Head, LabeledSample, PolicyBundle, Target};
use crate::action::{N_SPEED, N_STEER};
use crate::error::{Error, Result};
use crate::observation::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Soft-label width for steering targets, in bins.
    pub steer_sigma: f64,
    /// Soft-label width for speed targets, in bins.
    pub speed_sigma: f64,
    pub rng_seed: u64,
    /// Reshuffle the sample order every epoch.
    pub shuffle: bool,
    /// Scale meta-head sample weights by inverse scenario frequency so each
    /// scenario carries the same total weight.
    pub balance_meta: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 30,
            steer_sigma: 0.5,
            speed_sigma: 0.0,
            rng_seed: 0,
            shuffle: true,
            balance_meta: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if !(self.steer_sigma >= 0.0 && self.speed_sigma >= 0.0) {
            return Err(Error::config("train.steer_sigma", "sigmas must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub head: Head,
    pub samples: usize,
    /// Mean weighted cross-entropy seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

struct GradSink<'a> {
    grad: &'a mut [f64],
    touched: &'a mut Vec<usize>,
    seen: &'a mut [bool],
}

fn check_target(head: Head, target: &Target) -> Result<()> {
    match (head, target) {
        (Head::Meta, Target::Meta { .. }) | (Head::Scenario(_), Target::Action(_)) => Ok(()),
        _ => Err(Error::EmptyDataset(format!(
            "{head}: sample target kind does not match the head"
        ))),
    }
}

/// Weighted cross-entropy of one softmax group; accumulates the gradient
/// w.r.t. the group's weights and the hidden layer when `grad` is given.
#[allow(clippy::too_many_arguments)]
fn group_loss<const N: usize>(
    bundle: &PolicyBundle,
    w: usize,
    b: usize,
    target: &[f64; N],
    weight: f64,
    hidden: &[f64],
    dhidden: &mut [f64],
    grad: Option<&mut [f64]>,
) -> f64 {
    let h = hidden.len();
    let z: [f64; N] = bundle.affine(w, b, hidden);
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let mut loss = 0.0;
    for (t, zi) in target.iter().zip(&z) {
        if *t != 0.0 {
            loss -= t * (zi - log_z);
        }
    }
    if let Some(grad) = grad {
        for k in 0..N {
            let dz = weight * ((z[k] - log_z).exp() - target[k]);
            if dz == 0.0 {
                continue;
            }
            let row = w + k * h;
            for (g, x) in grad[row..row + h].iter_mut().zip(hidden) {
                *g += dz * x;
            }
            for (d, p) in dhidden.iter_mut().zip(&bundle.params[row..row + h]) {
                *d += dz * p;
            }
            grad[b + k] += dz;
        }
    }
    weight * loss
}

fn forward_backward(
    bundle: &PolicyBundle,
    obs: &Observation,
    target: &Target,
    head: Head,
    sink: Option<GradSink<'_>>,
) -> f64 {
    let l = *bundle.layout();
    let h = l.hidden;
    let pre = bundle.trunk_pre(obs);
    let hidden: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
    let mut dhidden = vec![0.0; h];
    let want_grad = sink.is_some();
    let mut sink = sink;
    let loss = {
        let mut g = sink.as_mut().map(|s| &mut *s.grad);
        match (head, target) {
            (Head::Meta, Target::Meta { dist, weight }) => group_loss(
                bundle,
                l.meta_w,
                l.meta_b,
                dist,
                *weight,
                &hidden,
                &mut dhidden,
                g.as_deref_mut(),
            ),
            (Head::Scenario(s), Target::Action(t)) => {
                let sub = l.sub[s.index()];
                let a = group_loss::<N_STEER>(
                    bundle,
                    sub.steer_w,
                    sub.steer_b,
                    &t.steer,
                    t.weight,
                    &hidden,
                    &mut dhidden,
                    g.as_deref_mut(),
                );
                let b = group_loss::<N_SPEED>(
                    bundle,
                    sub.speed_w,
                    sub.speed_b,
                    &t.speed,
                    t.weight,
                    &hidden,
                    &mut dhidden,
                    g.as_deref_mut(),
                );
                a + b
            }
            _ => unreachable!("target kind checked by caller"),
        }
    };
    if want_grad {
        let sink = sink.unwrap();
        let dpre: Vec<f64> = dhidden
            .iter()
            .zip(&pre)
            .map(|(d, p)| if *p > 0.0 { *d } else { 0.0 })
            .collect();
        if dpre.iter().all(|d| *d == 0.0) {
            return loss;
        }
        for (j, d) in dpre.iter().enumerate() {
            sink.grad[l.trunk_b + j] += d;
        }
        for (i, x) in obs.features() {
            let col = l.trunk_w + i * h;
            for (g, d) in sink.grad[col..col + h].iter_mut().zip(&dpre) {
                *g += x * d;
            }
            if !sink.seen[i] {
                sink.seen[i] = true;
                sink.touched.push(i);
            }
        }
    }
    loss
}

/// Weighted loss of one sample under the given head.
pub fn sample_loss(bundle: &PolicyBundle, sample: &LabeledSample, head: Head) -> Result<f64> {
    check_target(head, &sample.target)?;
    bundle.check_dims(&sample.observation)?;
    Ok(forward_backward(
        bundle,
        &sample.observation,
        &sample.target,
        head,
        None,
    ))
}

/// Loss and dense gradient over every parameter.
pub fn loss_and_gradient(
    bundle: &PolicyBundle,
    sample: &LabeledSample,
    head: Head,
) -> Result<(f64, Vec<f64>)> {
    check_target(head, &sample.target)?;
    bundle.check_dims(&sample.observation)?;
    let mut grad = vec![0.0; bundle.param_count()];
    let mut touched = Vec::new();
    let mut seen = vec![false; bundle.input_dim()];
    let loss = forward_backward(
        bundle,
        &sample.observation,
        &sample.target,
        head,
        Some(GradSink {
            grad: &mut grad,
            touched: &mut touched,
            seen: &mut seen,
        }),
    );
    Ok((loss, grad))
}

/// Mini-batch SGD on the mean weighted cross-entropy. Only the chosen head
/// and the shared trunk are updated.
pub fn train(
    bundle: &mut PolicyBundle,
    samples: &[LabeledSample],
    head: Head,
    cfg: &TrainConfig,
) -> Result<TrainingReport> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset(head.to_string()));
    }
    for s in samples {
        check_target(head, &s.target)?;
        bundle.check_dims(&s.observation)?;
    }
    let l = *bundle.layout();
    let h = l.hidden;
    let (head_start, head_end) = l.head_range(head);
    let mut grad = vec![0.0; l.total];
    let mut touched: Vec<usize> = Vec::new();
    let mut seen = vec![false; l.input];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut batch_loss = 0.0;
            for &idx in batch {
                let s = &samples[idx];
                batch_loss += forward_backward(
                    bundle,
                    &s.observation,
                    &s.target,
                    head,
                    Some(GradSink {
                        grad: &mut grad,
                        touched: &mut touched,
                        seen: &mut seen,
                    }),
                );
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            total += batch_loss;
            let step = cfg.learning_rate / batch.len() as f64;
            let params = bundle.params_mut();
            for k in (head_start..head_end).chain(l.trunk_b..l.trunk_b + h) {
                params[k] -= step * grad[k];
                grad[k] = 0.0;
            }
            for &i in &touched {
                let col = l.trunk_w + i * h;
                for (p, g) in params[col..col + h].iter_mut().zip(&mut grad[col..col + h]) {
                    *p -= step * *g;
                    *g = 0.0;
                }
                seen[i] = false;
            }
            touched.clear();
        }
        epoch_losses.push(total / samples.len() as f64);
    }
    if !bundle.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs,
            batch: 0,
        });
    }
    Ok(TrainingReport {
        head,
        samples: samples.len(),
        epoch_losses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub max_relative_error: f64,
    pub worst_coordinate: usize,
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps
/// vanishing partials from amplifying round-off.
fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares an analytic gradient against central finite differences at
/// `coords` with step `step`.
pub fn compare_gradients(
    bundle: &PolicyBundle,
    sample: &LabeledSample,
    head: Head,
    analytic: &[f64],
    coords: &[usize],
    step: f64,
) -> Result<GradientReport> {
    let mut probe = bundle.clone();
    let mut worst = (0.0, coords.first().copied().unwrap_or(0));
    for &c in coords {
        let orig = probe.params[c];
        probe.params[c] = orig + step;
        let up = sample_loss(&probe, sample, head)?;
        probe.params[c] = orig - step;
        let down = sample_loss(&probe, sample, head)?;
        probe.params[c] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[c], numeric);
        if err > worst.0 {
            worst = (err, c);
        }
    }
    Ok(GradientReport {
        max_relative_error: worst.0,
        worst_coordinate: worst.1,
        checked: coords.len(),
    })
}

/// Parameters that can influence the loss of `sample` under `head`.
pub(crate) fn relevant_coords(bundle: &PolicyBundle, sample: &LabeledSample, head: Head) -> Vec<usize> {
    let l = bundle.layout();
    let (a, b) = l.head_range(head);
    let mut coords: Vec<usize> = (a..b).chain(l.trunk_b..l.trunk_b + l.hidden).collect();
    for (i, _) in sample.observation.features() {
        let col = l.trunk_w + i * l.hidden;
        coords.extend(col..col + l.hidden);
    }
    coords
}

/// Analytic vs central finite-difference gradient (h = 1e-5) over
/// `n_coords` randomly chosen parameters that touch the sample's loss.
pub fn gradient_check(
    bundle: &PolicyBundle,
    sample: &LabeledSample,
    head: Head,
    n_coords: usize,
    seed: u64,
) -> Result<GradientReport> {
    if !bundle.is_finite() {
        return Err(Error::Checkpoint("non-finite parameters".into()));
    }
    let (_, analytic) = loss_and_gradient(bundle, sample, head)?;
    let pool = relevant_coords(bundle, sample, head);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = (0..n_coords.min(pool.len()))
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect();
    compare_gradients(bundle, sample, head, &analytic, &coords, 1e-5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Action, ScenarioId};
    use crate::observation::RasterDims;
    use crate::policy::{soft_label, Provenance};
    use crate::world::{spawn_scenario, World};

    fn sample(seed: u64, weight: f64) -> LabeledSample {
        let w = World::new(spawn_scenario(ScenarioId::Cross, seed)).unwrap();
        let t = soft_label(Action::new((seed % 7) as usize, 1).unwrap(), 0.5, 0.0).with_weight(weight);
        LabeledSample::action(w.observe(), t, ScenarioId::Cross, Provenance::Expert, 0)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let s = sample(seed, 1.0);
            let b = PolicyBundle::new(s.observation.dims(), 16, seed);
            let r = gradient_check(&b, &s, Head::Scenario(ScenarioId::Cross), 60, seed).unwrap();
            assert!(r.max_relative_error < 1e-4, "{r:?}");
            let m = LabeledSample::meta(s.observation.clone(), ScenarioId::Confront, 0);
            let r = gradient_check(&b, &m, Head::Meta, 60, seed).unwrap();
            assert!(r.max_relative_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn zeroed_partial_is_detected() {
        let s = sample(3, 1.0);
        let head = Head::Scenario(ScenarioId::Cross);
        let b = PolicyBundle::new(s.observation.dims(), 16, 3);
        let (_, mut g) = loss_and_gradient(&b, &s, head).unwrap();
        let l = b.layout();
        let coord = l.sub[ScenarioId::Cross.index()].steer_b;
        assert!(g[coord].abs() > 1e-6);
        g[coord] = 0.0;
        let r = compare_gradients(&b, &s, head, &g, &[coord], 1e-5).unwrap();
        assert!((r.max_relative_error - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_weight_has_zero_gradient_and_no_update() {
        let s = sample(5, 0.0);
        let head = Head::Scenario(ScenarioId::Cross);
        let b = PolicyBundle::new(s.observation.dims(), 16, 5);
        let (loss, g) = loss_and_gradient(&b, &s, head).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        let coords = relevant_coords(&b, &s, head);
        let r = compare_gradients(&b, &s, head, &g, &coords[..50], 1e-5).unwrap();
        assert_eq!(r.max_relative_error, 0.0);

        let mut trained = b.clone();
        train(&mut trained, &[s.clone(), s], head, &TrainConfig::default()).unwrap();
        assert_eq!(trained, b);
    }

    #[test]
    fn single_sample_is_memorized() {
        let w = World::new(spawn_scenario(ScenarioId::PathFollow, 2)).unwrap();
        let t = soft_label(Action::new(4, 2).unwrap(), 0.0, 0.0);
        let s = LabeledSample::action(w.observe(), t, ScenarioId::PathFollow, Provenance::Expert, 0);
        let mut b = PolicyBundle::new(s.observation.dims(), 32, 1);
        let cfg = TrainConfig {
            epochs: 200,
            ..TrainConfig::default()
        };
        let r = train(&mut b, &[s], Head::Scenario(ScenarioId::PathFollow), &cfg).unwrap();
        assert!(r.final_loss().unwrap() < 0.05, "{:?}", r.final_loss());
    }

    #[test]
    fn only_selected_head_and_trunk_change() {
        let s = sample(1, 1.0);
        let head = Head::Scenario(ScenarioId::Cross);
        let b0 = PolicyBundle::new(s.observation.dims(), 16, 2);
        let mut b = b0.clone();
        train(&mut b, &[s], head, &TrainConfig { epochs: 3, ..Default::default() }).unwrap();
        let l = b.layout();
        let (hs, he) = l.head_range(head);
        for i in 0..b.param_count() {
            let in_trunk = i < l.meta_w;
            let in_head = (hs..he).contains(&i);
            if !in_trunk && !in_head {
                assert_eq!(b.params()[i], b0.params()[i], "param {i} moved");
            }
        }
        assert_ne!(b, b0);
    }

    #[test]
    fn empty_and_mismatched_datasets_error() {
        let mut b = PolicyBundle::new(RasterDims::new(32, 32), 8, 0);
        assert!(matches!(
            train(&mut b, &[], Head::Meta, &TrainConfig::default()),
            Err(Error::EmptyDataset(_))
        ));
        let s = sample(0, 1.0);
        assert!(train(&mut b, &[s], Head::Meta, &TrainConfig::default()).is_err());
    }

    #[test]
    fn diverging_learning_rate_aborts() {
        let s = sample(2, 1.0);
        let mut b = PolicyBundle::new(s.observation.dims(), 16, 0);
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            ..Default::default()
        };
        let err = train(&mut b, &[s.clone(), s], Head::Scenario(ScenarioId::Cross), &cfg);
        assert!(matches!(err, Err(Error::NonFiniteLoss { .. })), "{err:?}");
    }
}
