use std::ops::Range;

use rand::Rng;

use super::loss::joint_loss;
use super::tape::EpisodeTape;
use super::{ModelConfig, ModelParams, NeuralError};
use crate::rng::seeded;

/// Teacher-forced inputs of one step.
#[derive(Debug, Clone)]
pub struct StepInput {
    pub span: Range<usize>,
    pub neighbours: Vec<Vec<f64>>,
    pub prev_action: Vec<f64>,
    /// Target direction; `neighbours.len()` means STOP.
    pub action: usize,
    pub remaining: usize,
    pub shift_target: bool,
}

/// A complete teacher-forced episode for checking gradients.
#[derive(Debug, Clone)]
pub struct GradCheckBundle {
    pub words: Vec<usize>,
    pub steps: Vec<StepInput>,
    pub balance_seed: u64,
}

impl GradCheckBundle {
    /// Small random episode: seven words in two sub-instructions, three steps,
    /// the last of which stops.
    pub fn synthetic(config: ModelConfig, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let f = config.feature_dim;
        let feat = |rng: &mut crate::rng::SeededRng| -> Vec<f64> {
            (0..f).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let words: Vec<usize> = (0..7)
            .map(|_| rng.gen_range(1..config.vocab_size))
            .collect();
        let n1: Vec<Vec<f64>> = (0..3).map(|_| feat(&mut rng)).collect();
        let n2: Vec<Vec<f64>> = (0..2).map(|_| feat(&mut rng)).collect();
        let n3: Vec<Vec<f64>> = (0..2).map(|_| feat(&mut rng)).collect();
        let a1 = n1[1].clone();
        let a2 = n2[0].clone();
        GradCheckBundle {
            words,
            steps: vec![
                StepInput {
                    span: 0..4,
                    neighbours: n1,
                    prev_action: vec![0.0; f],
                    action: 1,
                    remaining: 1,
                    shift_target: false,
                },
                StepInput {
                    span: 0..4,
                    neighbours: n2,
                    prev_action: a1,
                    action: 0,
                    remaining: 1,
                    shift_target: true,
                },
                StepInput {
                    span: 4..7,
                    neighbours: n3,
                    prev_action: a2,
                    action: 2,
                    remaining: 0,
                    shift_target: true,
                },
            ],
            balance_seed: seed,
        }
    }

    fn forward(&self, params: &ModelParams<f64>) -> Result<EpisodeTape<f64>, NeuralError> {
        let mut tape = EpisodeTape::new(params, &self.words)?;
        for s in &self.steps {
            tape.step(params, s.span.clone(), &s.neighbours, &s.prev_action)?;
            tape.shift(params, s.action, s.remaining)?;
        }
        Ok(tape)
    }

    fn joint(
        &self,
        tape: &EpisodeTape<f64>,
    ) -> Result<super::JointLoss<f64>, NeuralError> {
        let actions: Vec<usize> = self.steps.iter().map(|s| s.action).collect();
        let targets: Vec<bool> = self.steps.iter().map(|s| s.shift_target).collect();
        joint_loss(
            &tape.action_probs(),
            &actions,
            &tape.shift_probs(),
            &targets,
            self.balance_seed,
        )
    }

    pub fn loss(&self, params: &ModelParams<f64>) -> Result<f64, NeuralError> {
        let tape = self.forward(params)?;
        Ok(self.joint(&tape)?.total)
    }

    pub fn loss_and_grads(
        &self,
        params: &ModelParams<f64>,
    ) -> Result<(f64, ModelParams<f64>), NeuralError> {
        let tape = self.forward(params)?;
        let loss = self.joint(&tape)?;
        let grads = tape.backward(params, &loss)?;
        Ok((loss.total, grads))
    }
}

/// Entries whose analytic and numeric values are both below this magnitude
/// are compared by absolute error: at `eps = 1e-5` the central difference
/// carries roundoff of order 1e-11, which swamps their relative error.
pub const GRAD_NOISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: &'static str,
    /// Largest relative error over entries at or above the noise floor.
    pub max_rel_error: f64,
    /// Largest absolute error over entries below the noise floor.
    pub max_small_abs_error: f64,
    pub max_abs_grad: f64,
    /// Analytic and numeric values at the worst element.
    pub worst: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub loss: f64,
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn max_small_abs_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_small_abs_error)
            .fold(0.0, f64::max)
    }

    /// Relative error below `rel_tol` above the noise floor and absolute
    /// error below `1e-9` beneath it.
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error() < rel_tol && self.max_small_abs_error() < 1e-9
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Central finite differences of `f` at `x`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], eps: f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + eps;
            let up = f(&work);
            work[i] = x[i] - eps;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Compare analytic gradients with central differences for every parameter.
pub fn grad_check(
    params: &ModelParams<f64>,
    bundle: &GradCheckBundle,
    eps: f64,
) -> Result<GradCheckReport, NeuralError> {
    let (loss, grads) = bundle.loss_and_grads(params)?;
    if !loss.is_finite() {
        return Err(NeuralError::NonFinite("joint_loss"));
    }
    let mut work = params.clone();
    let mut groups = Vec::new();
    for (name, g) in grads.groups() {
        let mut max_rel_error: f64 = 0.0;
        let mut max_small_abs_error: f64 = 0.0;
        let mut worst = (0.0, 0.0);
        for i in 0..g.len() {
            let orig = work.group_mut(name).expect("known group").data[i];
            work.group_mut(name).expect("known group").data[i] = orig + eps;
            let up = bundle.loss(&work)?;
            work.group_mut(name).expect("known group").data[i] = orig - eps;
            let down = bundle.loss(&work)?;
            work.group_mut(name).expect("known group").data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            if g.data[i].abs().max(numeric.abs()) < GRAD_NOISE_FLOOR {
                max_small_abs_error = max_small_abs_error.max((g.data[i] - numeric).abs());
                continue;
            }
            let rel = relative_error(g.data[i], numeric);
            if rel > max_rel_error {
                max_rel_error = rel;
                worst = (g.data[i], numeric);
            }
        }
        groups.push(GroupCheck {
            name,
            max_rel_error,
            max_small_abs_error,
            max_abs_grad: g.data.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            worst,
        });
    }
    Ok(GradCheckReport { loss, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::softmax;

    #[test]
    fn softmax_cross_entropy_gradient() {
        let logits = [0.3, -1.2, 0.8];
        let p = softmax(&logits);
        let l = joint_loss(&[p], &[2], &[], &[], 0).unwrap();
        let numeric = central_difference(
            |z| {
                let p = softmax(z);
                -p[2].ln()
            },
            &logits,
            1e-5,
        );
        for i in 0..3 {
            assert!(relative_error(l.d_action_logits[0][i], numeric[i]) < 1e-9);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }
}
