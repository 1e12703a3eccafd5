//! Numeric kernel of the navigation agent.
//!
//! The forward pass of one episode is recorded on an [`EpisodeTape`]; the
//! backward pass replays the tape in reverse with hand-derived gradients.
//! Single-op entry points (`text_attend`, `policy_step`, ...) exist for
//! inspection and testing.

mod checkpoint;
mod gradcheck;
mod loss;
pub mod ops;
mod params;
mod tape;
mod tensor;
mod vocab;

pub use checkpoint::{Checkpoint, NamedTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{
    central_difference, grad_check, relative_error, GradCheckBundle, GradCheckReport, GroupCheck, StepInput,
    GRAD_NOISE_FLOOR,
};
pub use loss::{balanced_shift_sample, joint_loss, JointLoss, PROB_FLOOR};
pub use ops::AttentionResult;
pub use params::{ModelConfig, ModelParams};
pub use tape::{Encoding, EpisodeTape, StepRecord};
pub use tensor::{concat, dot, Tensor};
pub use vocab::{Vocab, UNK, UNK_ID};

use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum NeuralError {
    #[error("{op}: {message}")]
    Shape { op: &'static str, message: String },
    #[error("token id {id} outside vocabulary of size {size}")]
    OutOfVocabulary { id: usize, size: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("{op}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Recurrent state `h` and memory `m` of the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T> {
    pub h: Vec<T>,
    pub m: Vec<T>,
}

impl<T: Scalar> AgentState<T> {
    pub fn zeros(dim: usize) -> Self {
        AgentState {
            h: vec![T::zero(); dim],
            m: vec![T::zero(); dim],
        }
    }
}

pub(crate) fn check_len<T>(op: &'static str, v: &[T], expected: usize) -> Result<(), NeuralError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(NeuralError::Shape {
            op,
            message: format!("expected length {expected}, got {}", v.len()),
        })
    }
}

pub(crate) fn check_finite<T: Scalar>(op: &'static str, v: &[T]) -> Result<(), NeuralError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NeuralError::NonFinite(op))
    }
}

/// Run the instruction encoder; one hidden state per word.
pub fn encode_instruction<T: Scalar>(
    params: &ModelParams<T>,
    words: &[usize],
) -> Result<Vec<Vec<T>>, NeuralError> {
    Ok(Encoding::new(params, words)?.states())
}

/// Attention of the previous hidden state over the word states of one sub-instruction.
pub fn text_attend<T: Scalar>(
    params: &ModelParams<T>,
    h_prev: &[T],
    states: &[Vec<T>],
) -> Result<AttentionResult<T>, NeuralError> {
    let hd = params.config.hidden_dim;
    check_len("text_attend", h_prev, hd)?;
    if states.is_empty() {
        return Err(NeuralError::Empty("text_attend"));
    }
    for s in states {
        check_len("text_attend", s, hd)?;
    }
    let q = params.w_u.matvec(h_prev);
    let r = ops::attention_forward(&q, states, states);
    check_finite("text_attend", &r.attended)?;
    Ok(r)
}

fn project_views<T: Scalar>(
    op: &'static str,
    params: &ModelParams<T>,
    views: &[Vec<T>],
) -> Result<Vec<Vec<T>>, NeuralError> {
    if views.is_empty() {
        return Err(NeuralError::Empty(op));
    }
    views
        .iter()
        .map(|v| {
            check_len(op, v, params.config.feature_dim)?;
            Ok(ops::mlp_forward(&params.g_w1, &params.g_b1, &params.g_w2, &params.g_b2, v).out)
        })
        .collect()
}

/// Attention over candidate-direction features, keyed by the projection `g`.
pub fn visual_attend<T: Scalar>(
    params: &ModelParams<T>,
    h_prev: &[T],
    views: &[Vec<T>],
) -> Result<AttentionResult<T>, NeuralError> {
    check_len("visual_attend", h_prev, params.config.hidden_dim)?;
    let keys = project_views("visual_attend", params, views)?;
    let q = params.w_v.matvec(h_prev);
    let r = ops::attention_forward(&q, &keys, views);
    check_finite("visual_attend", &r.attended)?;
    Ok(r)
}

/// One policy cell step: input `[v̂; a_prev]`, incoming hidden `x̂`, incoming memory `m`.
pub fn policy_step<T: Scalar>(
    params: &ModelParams<T>,
    attended_view: &[T],
    prev_action: &[T],
    attended_text: &[T],
    state: &AgentState<T>,
) -> Result<AgentState<T>, NeuralError> {
    let c = params.config;
    check_len("policy_step", attended_view, c.feature_dim)?;
    check_len("policy_step", prev_action, c.feature_dim)?;
    check_len("policy_step", attended_text, c.hidden_dim)?;
    check_len("policy_step", &state.m, c.hidden_dim)?;
    let input = concat(&[attended_view, prev_action]);
    let cache = ops::lstm_forward(
        &params.pol_w_ih,
        &params.pol_w_hh,
        &params.pol_b,
        &input,
        attended_text,
        &state.m,
    );
    check_finite("policy_step", &cache.h)?;
    check_finite("policy_step", &cache.c)?;
    Ok(AgentState {
        h: cache.h,
        m: cache.c,
    })
}

/// Direction probabilities `softmax((W_a [h; x̂])ᵀ g(v_i))`.
pub fn action_logits<T: Scalar>(
    params: &ModelParams<T>,
    h: &[T],
    attended_text: &[T],
    views: &[Vec<T>],
) -> Result<Vec<T>, NeuralError> {
    check_len("action_logits", h, params.config.hidden_dim)?;
    check_len("action_logits", attended_text, params.config.hidden_dim)?;
    let keys = project_views("action_logits", params, views)?;
    let k = params.w_a.matvec(&concat(&[h, attended_text]));
    let logits: Vec<T> = keys.iter().map(|g| dot(&k, g)).collect();
    let p = crate::scalar::softmax(&logits);
    check_finite("action_logits", &p)?;
    Ok(p)
}

/// Probability of advancing to the next sub-instruction.
pub fn shift_probability<T: Scalar>(
    params: &ModelParams<T>,
    state: &AgentState<T>,
    selected_view: &[T],
    attended_text: &[T],
    remaining: usize,
) -> Result<T, NeuralError> {
    let c = params.config;
    check_len("shift_probability", &state.h, c.hidden_dim)?;
    check_len("shift_probability", &state.m, c.hidden_dim)?;
    check_len("shift_probability", selected_view, c.feature_dim)?;
    check_len("shift_probability", attended_text, c.hidden_dim)?;
    let cache = ops::shift_forward(
        params,
        &state.h,
        &state.m,
        selected_view,
        attended_text,
        remaining,
    );
    if !cache.prob.is_finite() {
        return Err(NeuralError::NonFinite("shift_probability"));
    }
    Ok(cache.prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(vocab: usize) -> ModelParams<f64> {
        ModelParams::zeros(ModelConfig::small(vocab))
    }

    #[test]
    fn zero_weight_encoder_is_constant() {
        let p = zero_params(5);
        let u = encode_instruction(&p, &[1, 2, 3, 4]).unwrap();
        // c_1 = 0.5 * 0 + 0.5 * tanh(0) = 0, so every h = 0.5 * tanh(0) = 0
        for (j, s) in u.iter().enumerate() {
            assert!(s.iter().all(|&v| v == 0.0), "state {j}");
        }
        let mut q = zero_params(5);
        q.enc_b.data.iter_mut().for_each(|v| *v = 1.0);
        let u = encode_instruction(&q, &[1, 2]).unwrap();
        let s = 1.0 / (1.0 + (-1.0f64).exp());
        let c1 = s * 1.0f64.tanh();
        let h1 = s * c1.tanh();
        assert!((u[0][0] - h1).abs() < 1e-15);
        let c2 = s * c1 + s * 1.0f64.tanh();
        assert!((u[1][3] - s * c2.tanh()).abs() < 1e-15);
    }

    #[test]
    fn encoder_rejects_unknown_ids() {
        let p = zero_params(3);
        assert!(matches!(
            encode_instruction(&p, &[3]),
            Err(NeuralError::OutOfVocabulary { id: 3, size: 3 })
        ));
        assert!(encode_instruction(&p, &[]).is_err());
    }

    #[test]
    fn single_word_encoding_is_one_step() {
        let p = ModelParams::<f64>::init(ModelConfig::small(4), 1);
        let u = encode_instruction(&p, &[2]).unwrap();
        let h = p.config.hidden_dim;
        let step = ops::lstm_forward(
            &p.enc_w_ih,
            &p.enc_w_hh,
            &p.enc_b,
            p.embedding.row(2),
            &vec![0.0; h],
            &vec![0.0; h],
        );
        assert_eq!(u, vec![step.h]);
        assert_eq!(u, encode_instruction(&p, &[2]).unwrap());
    }

    #[test]
    fn text_attention_uniform_and_singleton() {
        let p = zero_params(2);
        let hd = p.config.hidden_dim;
        let states: Vec<Vec<f64>> = (0..4).map(|j| vec![j as f64; hd]).collect();
        let r = text_attend(&p, &vec![0.3; hd], &states).unwrap();
        assert!(r.weights.iter().all(|&w| (w - 0.25).abs() < 1e-15));
        let r = text_attend(&p, &vec![0.3; hd], &states[2..3]).unwrap();
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.attended, states[2]);
    }

    #[test]
    fn visual_attention_matches_softmax_oracle() {
        let mut p = zero_params(2);
        let (f, g) = (p.config.feature_dim, p.config.proj_dim);
        // g(v) = W2 tanh(W1 v): route feature k through hidden k to output k
        for k in 0..3 {
            p.g_w1.row_mut(k)[k] = 1.0;
            p.g_w2.row_mut(k)[k] = 1.0;
        }
        p.w_v.row_mut(0)[0] = 1.0;
        p.w_v.row_mut(1)[0] = 2.0;
        p.w_v.row_mut(2)[0] = -1.0;
        let mut h = vec![0.0; p.config.hidden_dim];
        h[0] = 1.0;
        let views: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                let mut v = vec![0.0; f];
                v[k] = 0.5 + k as f64 * 0.25;
                v
            })
            .collect();
        let r = visual_attend(&p, &h, &views).unwrap();
        let z: Vec<f64> = (0..3)
            .map(|k| [1.0, 2.0, -1.0][k] * (0.5 + k as f64 * 0.25f64).tanh())
            .collect();
        let total: f64 = z.iter().map(|v| v.exp()).sum();
        for k in 0..3 {
            assert!((r.weights[k] - z[k].exp() / total).abs() < 1e-12);
        }
        assert_eq!(g, p.w_v.rows());
        let one = visual_attend(&p, &h, &views[..1]).unwrap();
        assert_eq!(one.weights, vec![1.0]);
    }

    #[test]
    fn policy_step_zero_and_scalar_oracle() {
        let p = zero_params(2);
        let hd = p.config.hidden_dim;
        let f = p.config.feature_dim;
        let out = policy_step(
            &p,
            &vec![0.0; f],
            &vec![0.0; f],
            &vec![0.0; hd],
            &AgentState::zeros(hd),
        )
        .unwrap();
        assert!(out.h.iter().all(|&v| v == 0.0));

        let mut cfg = ModelConfig::small(2);
        cfg.hidden_dim = 2;
        cfg.feature_dim = 1;
        let q = ModelParams::<f64>::init(cfg, 11);
        let v = [0.4];
        let a = [-0.3];
        let x = [0.2, -0.6];
        let st = AgentState {
            h: vec![9.0, 9.0],
            m: vec![0.1, -0.5],
        };
        let out = policy_step(&q, &v, &a, &x, &st).unwrap();
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        for k in 0..2 {
            let pre = |gate: usize| {
                let r = gate * 2 + k;
                q.pol_w_ih.row(r)[0] * v[0]
                    + q.pol_w_ih.row(r)[1] * a[0]
                    + q.pol_w_hh.row(r)[0] * x[0]
                    + q.pol_w_hh.row(r)[1] * x[1]
                    + q.pol_b.data[r]
            };
            let c = s(pre(1)) * st.m[k] + s(pre(0)) * pre(2).tanh();
            let h = s(pre(3)) * c.tanh();
            assert!((out.m[k] - c).abs() < 1e-12);
            assert!((out.h[k] - h).abs() < 1e-12);
        }
    }

    #[test]
    fn action_probabilities() {
        let mut p = zero_params(2);
        let (hd, f) = (p.config.hidden_dim, p.config.feature_dim);
        let views = vec![vec![0.1; f], vec![0.7; f], vec![-0.2; f]];
        let pr = action_logits(&p, &vec![0.5; hd], &vec![0.5; hd], &views).unwrap();
        assert!(pr.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

        // g(v)_0 = tanh(v_0) and k_0 = 2 / tanh(0.5) give logits (2, 0)
        p.g_w1.row_mut(0)[0] = 1.0;
        p.g_w2.row_mut(0)[0] = 1.0;
        p.w_a.row_mut(0)[0] = 2.0 / 0.5f64.tanh();
        let mut v0 = vec![0.0; f];
        v0[0] = 0.5;
        let stop = vec![0.0; f];
        let mut h = vec![0.0; hd];
        h[0] = 1.0;
        let pr = action_logits(&p, &h, &vec![0.0; hd], &[v0, stop]).unwrap();
        assert!((pr[0] - 0.8808).abs() < 5e-5);
        assert!((pr[1] - 0.1192).abs() < 5e-5);
        assert!((pr[0] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn shift_probability_cases() {
        let p = zero_params(2);
        let (hd, f) = (p.config.hidden_dim, p.config.feature_dim);
        let st = AgentState {
            h: vec![0.3; hd],
            m: vec![0.2; hd],
        };
        let ps = shift_probability(&p, &st, &vec![0.1; f], &vec![0.4; hd], 2).unwrap();
        assert_eq!(ps, 0.5);

        let mut q = ModelParams::<f64>::init(ModelConfig::small(2), 3);
        let zero_m = AgentState {
            h: vec![0.3; hd],
            m: vec![0.0; hd],
        };
        let cache = ops::shift_forward(&q, &zero_m.h, &zero_m.m, &vec![0.1; f], &vec![0.4; hd], 1);
        assert!(cache.hc.iter().all(|&v| v == 0.0));
        let prior: f64 = (0..q.config.prior_dim)
            .map(|r| q.w_c2.row(0)[r] * q.w_c3.row(r)[1])
            .sum();
        let expect = 1.0 / (1.0 + (-(prior + q.b_c2.data[0])).exp());
        assert!((cache.prob - expect).abs() < 1e-15);

        let p0 = shift_probability(&q, &st, &vec![0.1; f], &vec![0.4; hd], 0).unwrap();
        let p3 = shift_probability(&q, &st, &vec![0.1; f], &vec![0.4; hd], 3).unwrap();
        assert_ne!(p0, p3);

        let before = shift_probability(&q, &st, &vec![0.1; f], &vec![0.4; hd], 3).unwrap();
        q.b_c2.data[0] += 0.1;
        let after = shift_probability(&q, &st, &vec![0.1; f], &vec![0.4; hd], 3).unwrap();
        assert!(after > before);
    }

    #[test]
    fn shape_errors() {
        let p = zero_params(2);
        assert!(text_attend(&p, &[0.0; 3], &[vec![0.0; 16]]).is_err());
        assert!(visual_attend(&p, &[0.0; 16], &[]).is_err());
        assert!(action_logits(&p, &[0.0; 16], &[0.0; 16], &[vec![0.0; 3]]).is_err());
    }
}
