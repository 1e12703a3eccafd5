use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    rollout, rollout_with_grads, ActionForcing, AgentError, RolloutConfig, ShiftForcing,
    SyntheticFeatures, ToyWorld,
};
use crate::dataset::Episode;
use crate::metrics::{confusion_stats, ShiftConfusion};
use crate::navgraph::EnvGraph;
use crate::neural::{ModelParams, Vocab};
use crate::rng::{derive_seed, seeded};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub holdout_fraction: f64,
    /// Held-out evaluation period in epochs; the last epoch is always evaluated.
    pub eval_every: usize,
    pub max_steps: usize,
    pub shift_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.05,
            clip_norm: 5.0,
            holdout_fraction: 0.2,
            eval_every: 20,
            max_steps: 20,
            shift_threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_action_loss: f64,
    pub mean_shift_loss: f64,
    pub heldout: Option<ShiftConfusion>,
    pub heldout_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochStats>,
    pub train_ids: Vec<String>,
    pub heldout_ids: Vec<String>,
    /// Held-out shift confusion of the final parameters under inference
    /// (greedy actions, predicted shifts).
    pub final_heldout: ShiftConfusion,
    /// F1 of always predicting the majority class on the same held-out steps.
    pub baseline_f1: f64,
    /// Held-out confusion with ground-truth actions and teacher shifts, where
    /// the active sub-instruction is always the annotated one.
    pub teacher_heldout: ShiftConfusion,
    pub teacher_baseline_f1: f64,
}

impl TrainReport {
    pub fn first_loss(&self) -> f64 {
        self.curve.first().map(|e| e.mean_loss).unwrap_or(f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        self.curve.last().map(|e| e.mean_loss).unwrap_or(f64::NAN)
    }

    pub fn final_f1(&self) -> f64 {
        confusion_stats(&self.final_heldout).f1_or_zero()
    }
}

/// F1 of a constant predictor that always outputs the majority ground-truth
/// class; undefined F1 counts as 0. A tie takes the better of the two.
pub fn majority_baseline_f1(c: &ShiftConfusion) -> f64 {
    let pos = (c.tp + c.fn_) as f64;
    let neg = (c.tn + c.fp) as f64;
    let always_positive = if pos > 0.0 {
        2.0 * pos / (2.0 * pos + neg)
    } else {
        0.0
    };
    if pos >= neg {
        always_positive
    } else {
        0.0
    }
}

/// Inference setting: greedy actions and predicted shifts.
fn shift_eval_config(config: &TrainConfig) -> RolloutConfig {
    RolloutConfig {
        action_forcing: ActionForcing::Student,
        shift_forcing: ShiftForcing::Predicted,
        shift_threshold: config.shift_threshold,
        max_steps: config.max_steps,
        sample_actions: false,
        seed: config.seed,
    }
}

/// Shift confusion summed over rollouts.
pub fn evaluate_shifts<T: Scalar>(
    episodes: &[(&EnvGraph, &Episode)],
    params: &ModelParams<T>,
    vocab: &Vocab,
    features: &SyntheticFeatures,
    config: &RolloutConfig,
) -> Result<ShiftConfusion, AgentError> {
    let mut total = ShiftConfusion::default();
    for (graph, ep) in episodes {
        let r = rollout(ep, graph, params, vocab, features, config)?;
        total = total.merge(r.confusion());
    }
    Ok(total)
}

/// Student-forced actions (sampled), teacher-forced shifts, plain SGD with
/// global-norm clipping, one update per episode.
pub fn train_toy<T: Scalar>(
    worlds: &[ToyWorld],
    params: &mut ModelParams<T>,
    vocab: &Vocab,
    features: &SyntheticFeatures,
    config: &TrainConfig,
) -> Result<TrainReport, AgentError> {
    if !(config.lr >= 0.0 && config.lr.is_finite()) {
        return Err(AgentError::Config(format!("learning rate {}", config.lr)));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(AgentError::Config("holdout fraction outside [0, 1)".into()));
    }
    let all: Vec<(&EnvGraph, &Episode)> = worlds
        .iter()
        .flat_map(|w| w.episodes.iter().map(move |e| (&w.graph, e)))
        .collect();
    if all.is_empty() {
        return Err(AgentError::Config("no training episodes".into()));
    }
    let mut rng = seeded(derive_seed(config.seed, "split"));
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.shuffle(&mut rng);
    let n_held = ((all.len() as f64) * config.holdout_fraction).round() as usize;
    let n_held = n_held.min(all.len() - 1);
    let mut held_idx = order[..n_held].to_vec();
    let mut train_idx = order[n_held..].to_vec();
    held_idx.sort_unstable();
    train_idx.sort_unstable();
    let held: Vec<(&EnvGraph, &Episode)> = held_idx.iter().map(|&i| all[i]).collect();

    let train_config = RolloutConfig {
        action_forcing: ActionForcing::Student,
        shift_forcing: ShiftForcing::Teacher,
        shift_threshold: config.shift_threshold,
        max_steps: config.max_steps,
        sample_actions: true,
        seed: config.seed,
    };
    let eval_config = shift_eval_config(config);
    let lr = T::of(config.lr);
    let clip = T::of(config.clip_norm);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut losses = vec![(0.0, 0.0, 0.0); all.len()];

    for epoch in 1..=config.epochs {
        let mut visit = train_idx.clone();
        visit.shuffle(&mut seeded(derive_seed(config.seed, &format!("epoch{epoch}"))));
        for &i in &visit {
            let (graph, ep) = all[i];
            let mut ep_rng = seeded(derive_seed(config.seed, &format!("train/{}", ep.path_id)));
            let (result, mut grads) =
                rollout_with_grads(ep, graph, params, vocab, features, &train_config, &mut ep_rng)?;
            if !result.loss.total.is_finite() {
                return Err(AgentError::Diverged {
                    epoch,
                    message: format!("non-finite loss on {}", ep.path_id),
                });
            }
            let norm = grads.global_norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
            params.sgd_step(&grads, lr);
            if let Some(name) = params.first_non_finite() {
                return Err(AgentError::Diverged {
                    epoch,
                    message: format!("parameter group {name} became non-finite"),
                });
            }
            losses[i] = (result.loss.total, result.loss.action, result.loss.shift);
        }
        let n = train_idx.len() as f64;
        let mean = |f: fn(&(f64, f64, f64)) -> f64| -> f64 {
            train_idx.iter().map(|&i| f(&losses[i])).sum::<f64>() / n
        };
        let evaluate = epoch == config.epochs
            || (config.eval_every > 0 && epoch % config.eval_every == 0);
        let heldout = if evaluate && !held.is_empty() {
            Some(evaluate_shifts(&held, params, vocab, features, &eval_config)?)
        } else {
            None
        };
        let stats = EpochStats {
            epoch,
            mean_loss: mean(|l| l.0),
            mean_action_loss: mean(|l| l.1),
            mean_shift_loss: mean(|l| l.2),
            heldout_f1: heldout.as_ref().and_then(|c| confusion_stats(c).f1),
            heldout,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (action {:.4}, shift {:.4})",
            stats.mean_loss,
            stats.mean_action_loss,
            stats.mean_shift_loss
        );
        curve.push(stats);
    }

    let final_heldout = evaluate_shifts(&held, params, vocab, features, &eval_config)?;
    let teacher_config = RolloutConfig {
        action_forcing: ActionForcing::Teacher,
        shift_forcing: ShiftForcing::Teacher,
        ..eval_config
    };
    let teacher_heldout = evaluate_shifts(&held, params, vocab, features, &teacher_config)?;
    Ok(TrainReport {
        curve,
        train_ids: train_idx.iter().map(|&i| all[i].1.path_id.clone()).collect(),
        heldout_ids: held_idx.iter().map(|&i| all[i].1.path_id.clone()).collect(),
        baseline_f1: majority_baseline_f1(&final_heldout),
        final_heldout,
        teacher_baseline_f1: majority_baseline_f1(&teacher_heldout),
        teacher_heldout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_baseline() {
        // mostly negatives: always-negative has no positive predictions
        assert_eq!(majority_baseline_f1(&ShiftConfusion::new(1, 5, 2, 3)), 0.0);
        // 6 positives, 2 negatives: precision 0.75, recall 1
        let f = majority_baseline_f1(&ShiftConfusion::new(4, 1, 1, 2));
        assert!((f - 2.0 * 0.75 / 1.75).abs() < 1e-12);
    }
}
