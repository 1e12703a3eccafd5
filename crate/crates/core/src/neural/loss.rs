use rand::seq::index::sample;

use super::NeuralError;
use crate::rng::seeded;
use crate::Scalar;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Loss value with its gradients with respect to the pre-softmax action
/// logits and the pre-sigmoid shift logits.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoss<T> {
    pub total: T,
    pub action: T,
    pub shift: T,
    pub d_action_logits: Vec<Vec<T>>,
    pub d_shift_logits: Vec<T>,
    /// Step indices that entered the shift term, ascending.
    pub shift_samples: Vec<usize>,
}

/// Draw `min(#pos, #neg)` indices from each class with the seeded generator.
/// Returns the selected indices in ascending order.
pub fn balanced_shift_sample(targets: &[bool], seed: u64) -> Vec<usize> {
    let pos: Vec<usize> = (0..targets.len()).filter(|&i| targets[i]).collect();
    let neg: Vec<usize> = (0..targets.len()).filter(|&i| !targets[i]).collect();
    let n = pos.len().min(neg.len());
    if n == 0 {
        return Vec::new();
    }
    let mut rng = seeded(seed);
    let mut out: Vec<usize> = sample(&mut rng, pos.len(), n)
        .into_iter()
        .map(|i| pos[i])
        .chain(sample(&mut rng, neg.len(), n).into_iter().map(|i| neg[i]))
        .collect();
    out.sort_unstable();
    out
}

/// Action cross-entropy plus balanced shift binary cross-entropy.
pub fn joint_loss<T: Scalar>(
    action_probs: &[Vec<T>],
    action_targets: &[usize],
    shift_probs: &[T],
    shift_targets: &[bool],
    balance_seed: u64,
) -> Result<JointLoss<T>, NeuralError> {
    if action_probs.len() != action_targets.len() {
        return Err(NeuralError::LengthMismatch {
            op: "joint_loss",
            left: action_probs.len(),
            right: action_targets.len(),
        });
    }
    if shift_probs.len() != shift_targets.len() {
        return Err(NeuralError::LengthMismatch {
            op: "joint_loss",
            left: shift_probs.len(),
            right: shift_targets.len(),
        });
    }
    let floor = T::of(PROB_FLOOR);
    let mut action = T::zero();
    let mut d_action_logits = Vec::with_capacity(action_probs.len());
    for (p, &y) in action_probs.iter().zip(action_targets) {
        if y >= p.len() {
            return Err(NeuralError::Shape {
                op: "joint_loss",
                message: format!("target {y} outside {} actions", p.len()),
            });
        }
        action -= p[y].max(floor).ln();
        let d: Vec<T> = if p[y] < floor {
            vec![T::zero(); p.len()]
        } else {
            p.iter()
                .enumerate()
                .map(|(i, &pi)| if i == y { pi - T::one() } else { pi })
                .collect()
        };
        d_action_logits.push(d);
    }

    let shift_samples = balanced_shift_sample(shift_targets, balance_seed);
    if shift_samples.is_empty() && !shift_targets.is_empty() {
        log::warn!("shift targets hold a single class; shift term is zero");
    }
    let mut shift = T::zero();
    let mut d_shift_logits = vec![T::zero(); shift_probs.len()];
    for &i in &shift_samples {
        let p = shift_probs[i];
        let (q, clamped) = if shift_targets[i] {
            (p, p < floor)
        } else {
            (T::one() - p, T::one() - p < floor)
        };
        shift -= q.max(floor).ln();
        if !clamped {
            let y = if shift_targets[i] { T::one() } else { T::zero() };
            d_shift_logits[i] = p - y;
        }
    }
    Ok(JointLoss {
        total: action + shift,
        action,
        shift,
        d_action_logits,
        d_shift_logits,
        shift_samples,
    })
}
