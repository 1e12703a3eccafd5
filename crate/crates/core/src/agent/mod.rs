//! Rollouts of the agent on graph episodes, toy worlds and the training loop.

mod features;
mod toy;
mod train;

pub use features::SyntheticFeatures;
pub use toy::{
    generate_toy_world, toy_model_config, toy_vocab, toy_worlds, ToyWorld, ToyWorldConfig,
    LANDMARKS,
};
pub use train::{
    evaluate_shifts, majority_baseline_f1, train_toy, EpochStats, TrainConfig, TrainReport,
};

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::dataset::{gt_shift_signal, DatasetError, Episode};
use crate::metrics::ShiftConfusion;
use crate::navgraph::{EnvGraph, GraphError};
use crate::neural::{joint_loss, EpisodeTape, ModelParams, NeuralError, Vocab};
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("episode {path_id}: ground-truth viewpoint {to} is not adjacent to {from}")]
    NotAdjacent {
        path_id: String,
        from: String,
        to: String,
    },
    #[error("episode {0} has no sub-instructions")]
    NoSubInstructions(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },
    #[error("toy world generation failed: {0}")]
    Generation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionForcing {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftForcing {
    Teacher,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub action_forcing: ActionForcing,
    pub shift_forcing: ShiftForcing,
    pub shift_threshold: f64,
    pub max_steps: usize,
    /// Student actions are sampled from the policy instead of taken greedily.
    pub sample_actions: bool,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            action_forcing: ActionForcing::Student,
            shift_forcing: ShiftForcing::Predicted,
            shift_threshold: 0.5,
            max_steps: 20,
            sample_actions: false,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn teacher() -> Self {
        RolloutConfig {
            action_forcing: ActionForcing::Teacher,
            shift_forcing: ShiftForcing::Teacher,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.shift_threshold > 0.0 && self.shift_threshold < 1.0) {
            return Err(AgentError::Config(format!(
                "shift threshold {} outside (0, 1)",
                self.shift_threshold
            )));
        }
        if self.max_steps == 0 {
            return Err(AgentError::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAction {
    /// Viewpoint moved to; the current one when stopping.
    pub viewpoint: String,
    pub stop: bool,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEvent {
    pub step: usize,
    pub p_shift: f64,
    pub predicted: bool,
    pub ground_truth: bool,
    /// Sub-instruction active during the step.
    pub sub_idx: usize,
    /// Whether the pointer advanced after the step.
    pub advanced: bool,
    /// Agent position after the step.
    pub viewpoint: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stop,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub action: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub path_id: String,
    pub trajectory: Vec<String>,
    pub actions: Vec<StepAction>,
    pub shift_events: Vec<ShiftEvent>,
    pub loss: LossComponents,
    pub terminated_by: Termination,
}

impl RolloutResult {
    /// Predicted shift signals against ground truth, one entry per step.
    pub fn confusion(&self) -> ShiftConfusion {
        let mut c = ShiftConfusion::default();
        for e in &self.shift_events {
            c.record(e.predicted, e.ground_truth);
        }
        c
    }

    pub fn final_sub_idx(&self) -> usize {
        self.shift_events
            .last()
            .map(|e| e.sub_idx + usize::from(e.advanced))
            .unwrap_or(0)
    }
}

/// Instruction words (sub-instructions concatenated, lower-cased) and the
/// word range of each sub-instruction.
pub fn instruction_words(episode: &Episode) -> (Vec<String>, Vec<std::ops::Range<usize>>) {
    let mut words = Vec::new();
    let mut spans = Vec::new();
    for s in &episode.sub_instructions {
        let start = words.len();
        words.extend(s.lowercase_words());
        spans.push(start..words.len());
    }
    (words, spans)
}

/// Everything the backward pass needs after a rollout.
pub(crate) struct Recorded<T> {
    pub tape: EpisodeTape<T>,
    pub action_targets: Vec<usize>,
    pub shift_targets: Vec<bool>,
    pub balance_seed: u64,
}

pub(crate) fn run<T: Scalar>(
    episode: &Episode,
    graph: &EnvGraph,
    params: &ModelParams<T>,
    vocab: &Vocab,
    features: &SyntheticFeatures,
    config: &RolloutConfig,
    rng: &mut SeededRng,
) -> Result<(RolloutResult, Recorded<T>), AgentError> {
    config.validate()?;
    let n_sub = episode.sub_instructions.len();
    if n_sub == 0 || episode.sub_paths.len() != n_sub {
        return Err(AgentError::NoSubInstructions(episode.path_id.clone()));
    }
    let (words, spans) = instruction_words(episode);
    if spans.iter().any(|s| s.is_empty()) {
        return Err(AgentError::NoSubInstructions(episode.path_id.clone()));
    }
    let ids = vocab.encode(&words);
    let mut tape = EpisodeTape::new(params, &ids)?;
    let path = graph.indices(&episode.path)?;
    let goal = *path.last().expect("validated path");

    let mut current = path[0];
    let mut sub_idx = 0usize;
    let mut prev_action = vec![T::zero(); params.config.feature_dim];
    let mut trajectory = vec![graph.id(current).to_string()];
    let mut actions = Vec::new();
    let mut shift_events = Vec::new();
    let mut action_targets = Vec::new();
    let mut shift_targets = Vec::new();
    let mut terminated_by = Termination::MaxSteps;

    for step in 0..config.max_steps {
        let neighbours: Vec<usize> = graph.neighbors(current).iter().map(|&(j, _)| j).collect();
        let feats: Vec<Vec<T>> = neighbours
            .iter()
            .map(|&j| features.view_as::<T>(graph, current, j))
            .collect::<Result<_, _>>()?;
        let probs = tape
            .step(params, spans[sub_idx].clone(), &feats, &prev_action)?
            .to_vec();
        let stop = neighbours.len();

        let target = match config.action_forcing {
            ActionForcing::Teacher => match path.get(step + 1) {
                None => stop,
                Some(&next) => neighbours.iter().position(|&j| j == next).ok_or_else(|| {
                    AgentError::NotAdjacent {
                        path_id: episode.path_id.clone(),
                        from: graph.id(current).to_string(),
                        to: graph.id(next).to_string(),
                    }
                })?,
            },
            ActionForcing::Student => student_target(graph, current, goal, &neighbours),
        };
        let choice = match config.action_forcing {
            ActionForcing::Teacher => target,
            ActionForcing::Student if config.sample_actions => {
                let w: Vec<f64> = probs.iter().map(|p| p.as_f64()).collect();
                WeightedIndex::new(&w)
                    .map(|d| d.sample(rng))
                    .unwrap_or_else(|_| argmax(&probs))
            }
            ActionForcing::Student => argmax(&probs),
        };
        action_targets.push(target);

        let next = if choice == stop {
            current
        } else {
            neighbours[choice]
        };
        let remaining = n_sub - 1 - sub_idx;
        let p_shift = tape.shift(params, choice, remaining)?.as_f64();
        let truth = gt_shift_signal(graph, episode, graph.id(next), sub_idx)?;
        shift_targets.push(truth);
        let predicted = p_shift > config.shift_threshold;
        let wants = match config.shift_forcing {
            ShiftForcing::Teacher => truth,
            ShiftForcing::Predicted => predicted,
        };
        let advanced = wants && sub_idx + 1 < n_sub;

        actions.push(StepAction {
            viewpoint: graph.id(next).to_string(),
            stop: choice == stop,
            prob: probs[choice].as_f64(),
        });
        shift_events.push(ShiftEvent {
            step,
            p_shift,
            predicted,
            ground_truth: truth,
            sub_idx,
            advanced,
            viewpoint: graph.id(next).to_string(),
        });
        if advanced {
            sub_idx += 1;
        }
        if choice == stop {
            terminated_by = Termination::Stop;
            break;
        }
        prev_action = feats[choice].clone();
        current = next;
        trajectory.push(graph.id(current).to_string());
    }

    let balance_seed = derive_seed(config.seed, &episode.path_id);
    let loss = joint_loss(
        &tape.action_probs(),
        &action_targets,
        &tape.shift_probs(),
        &shift_targets,
        balance_seed,
    )?;
    let result = RolloutResult {
        path_id: episode.path_id.clone(),
        trajectory,
        actions,
        shift_events,
        loss: LossComponents {
            total: loss.total.as_f64(),
            action: loss.action.as_f64(),
            shift: loss.shift.as_f64(),
        },
        terminated_by,
    };
    Ok((
        result,
        Recorded {
            tape,
            action_targets,
            shift_targets,
            balance_seed,
        },
    ))
}

/// Next hop on the shortest path to the goal, STOP at the goal.
fn student_target(graph: &EnvGraph, current: usize, goal: usize, neighbours: &[usize]) -> usize {
    if current == goal {
        return neighbours.len();
    }
    let mut best = (f64::INFINITY, neighbours.len());
    for (k, &j) in neighbours.iter().enumerate() {
        let d = graph.edge_weight(current, j).unwrap_or(f64::INFINITY) + graph.dist_idx(j, goal);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Roll the agent out on one episode.
pub fn rollout<T: Scalar>(
    episode: &Episode,
    graph: &EnvGraph,
    params: &ModelParams<T>,
    vocab: &Vocab,
    features: &SyntheticFeatures,
    config: &RolloutConfig,
) -> Result<RolloutResult, AgentError> {
    let mut rng = seeded(derive_seed(config.seed, &episode.path_id));
    Ok(run(episode, graph, params, vocab, features, config, &mut rng)?.0)
}

/// Roll out and return the joint-loss gradients as well.
pub fn rollout_with_grads<T: Scalar>(
    episode: &Episode,
    graph: &EnvGraph,
    params: &ModelParams<T>,
    vocab: &Vocab,
    features: &SyntheticFeatures,
    config: &RolloutConfig,
    rng: &mut SeededRng,
) -> Result<(RolloutResult, ModelParams<T>), AgentError> {
    let (result, rec) = run(episode, graph, params, vocab, features, config, rng)?;
    let loss = joint_loss(
        &rec.tape.action_probs(),
        &rec.action_targets,
        &rec.tape.shift_probs(),
        &rec.shift_targets,
        rec.balance_seed,
    )?;
    let grads = rec.tape.backward(params, &loss)?;
    Ok((result, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::evaluate_path;
    use crate::neural::ModelConfig;

    fn world() -> ToyWorld {
        generate_toy_world(&ToyWorldConfig::default(), 3).unwrap()
    }

    fn model(vocab: &Vocab, feats: &SyntheticFeatures) -> ModelParams<f64> {
        let mut cfg = ModelConfig::small(vocab.len());
        cfg.feature_dim = feats.feature_dim();
        ModelParams::init(cfg, 1)
    }

    #[test]
    fn teacher_replay_reproduces_paths() {
        let w = world();
        let vocab = w.vocab();
        let feats = SyntheticFeatures::default();
        let p = model(&vocab, &feats);
        for ep in &w.episodes {
            let r = rollout(ep, &w.graph, &p, &vocab, &feats, &RolloutConfig::teacher()).unwrap();
            assert_eq!(r.trajectory, ep.path);
            assert_eq!(r.terminated_by, Termination::Stop);
            assert_eq!(r.final_sub_idx(), ep.sub_instructions.len() - 1);
            let e = evaluate_path(&w.graph, &r.trajectory, &ep.path, 3.0).unwrap();
            assert_eq!(e.ndtw, 1.0);
            for pair in r.shift_events.windows(2) {
                assert!(pair[1].sub_idx - pair[0].sub_idx <= 1);
            }
        }
    }

    #[test]
    fn zero_params_never_shift() {
        let w = world();
        let vocab = w.vocab();
        let feats = SyntheticFeatures::default();
        let mut cfg = ModelConfig::small(vocab.len());
        cfg.feature_dim = feats.feature_dim();
        let p = ModelParams::<f64>::zeros(cfg);
        let config = RolloutConfig {
            action_forcing: ActionForcing::Teacher,
            ..Default::default()
        };
        let r = rollout(&w.episodes[0], &w.graph, &p, &vocab, &feats, &config).unwrap();
        assert!(r.shift_events.iter().all(|e| e.p_shift == 0.5 && e.sub_idx == 0));
    }

    #[test]
    fn stop_at_first_step() {
        let w = world();
        let vocab = w.vocab();
        let feats = SyntheticFeatures::default();
        let p = model(&vocab, &feats);
        let start = w.episodes[0].path[0].clone();
        let here = Episode::from_words(
            "here",
            w.graph.scan.clone(),
            vec![start.clone()],
            vec![vec!["stop".into(), "right".into(), "here".into()]],
            vec![crate::dataset::SubPath::new(0, 0)],
            0.0,
        );
        let r = rollout(&here, &w.graph, &p, &vocab, &feats, &RolloutConfig::teacher()).unwrap();
        assert_eq!(r.trajectory, vec![start]);
        assert!(r.actions[0].stop);
        assert_eq!(w.graph.path_length(&r.trajectory).unwrap(), 0.0);

        let mut cfg = RolloutConfig::teacher();
        cfg.max_steps = 1;
        let r = rollout(&w.episodes[0], &w.graph, &p, &vocab, &feats, &cfg).unwrap();
        assert_eq!(r.terminated_by, Termination::MaxSteps);
        assert_eq!(r.trajectory.len(), 2);
    }

    #[test]
    fn corrupt_episode_is_rejected() {
        let w = world();
        let vocab = w.vocab();
        let feats = SyntheticFeatures::default();
        let p = model(&vocab, &feats);
        let ep = &w.episodes[0];
        let far = w
            .graph
            .nodes()
            .iter()
            .map(|n| n.id.clone())
            .find(|id| {
                let a = w.graph.idx(&ep.path[0]).unwrap();
                let b = w.graph.idx(id).unwrap();
                a != b && w.graph.edge_weight(a, b).is_none()
            })
            .unwrap();
        let mut bad = ep.clone();
        bad.path[1] = far;
        let r = rollout(&bad, &w.graph, &p, &vocab, &feats, &RolloutConfig::teacher());
        assert!(matches!(r, Err(AgentError::NotAdjacent { .. }) | Err(AgentError::Dataset(_))));
    }
}
