use std::ops::Range;

use super::loss::JointLoss;
use super::ops::{self, AttentionResult, LstmCache, MlpCache, ShiftCache};
use super::tensor::{add_into, axpy, concat, dot};
use super::{check_finite, check_len, ModelParams, NeuralError};
use crate::Scalar;

/// Encoder activations for one instruction.
#[derive(Debug, Clone)]
pub struct Encoding<T> {
    pub words: Vec<usize>,
    cells: Vec<LstmCache<T>>,
}

impl<T: Scalar> Encoding<T> {
    pub fn new(params: &ModelParams<T>, words: &[usize]) -> Result<Self, NeuralError> {
        if words.is_empty() {
            return Err(NeuralError::Empty("encode_instruction"));
        }
        let size = params.config.vocab_size;
        if let Some(&id) = words.iter().find(|&&id| id >= size) {
            return Err(NeuralError::OutOfVocabulary { id, size });
        }
        let hd = params.config.hidden_dim;
        let mut h = vec![T::zero(); hd];
        let mut c = vec![T::zero(); hd];
        let mut cells = Vec::with_capacity(words.len());
        for &id in words {
            let cell = ops::lstm_forward(
                &params.enc_w_ih,
                &params.enc_w_hh,
                &params.enc_b,
                params.embedding.row(id),
                &h,
                &c,
            );
            check_finite("encode_instruction", &cell.h)?;
            h.clone_from(&cell.h);
            c.clone_from(&cell.c);
            cells.push(cell);
        }
        Ok(Encoding {
            words: words.to_vec(),
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn states(&self) -> Vec<Vec<T>> {
        self.cells.iter().map(|c| c.h.clone()).collect()
    }

    fn final_state(&self) -> (Vec<T>, Vec<T>) {
        let last = self.cells.last().expect("non-empty encoding");
        (last.h.clone(), last.c.clone())
    }
}

/// Activations of one navigation step.
#[derive(Debug, Clone)]
pub struct StepRecord<T> {
    pub span: Range<usize>,
    pub h_prev: Vec<T>,
    pub m_prev: Vec<T>,
    text_query: Vec<T>,
    text_keys: Vec<Vec<T>>,
    pub text: AttentionResult<T>,
    /// Candidate features; the last one is the STOP feature.
    pub views: Vec<Vec<T>>,
    projections: Vec<MlpCache<T>>,
    visual_query: Vec<T>,
    pub visual: AttentionResult<T>,
    pub prev_action: Vec<T>,
    cell: LstmCache<T>,
    action_key: Vec<T>,
    pub action_probs: Vec<T>,
    shift: Option<ShiftCache<T>>,
    shift_selected: Option<usize>,
}

impl<T: Scalar> StepRecord<T> {
    pub fn h(&self) -> &[T] {
        &self.cell.h
    }

    pub fn m(&self) -> &[T] {
        &self.cell.c
    }

    pub fn stop_index(&self) -> usize {
        self.views.len() - 1
    }

    pub fn shift_prob(&self) -> Option<T> {
        self.shift.as_ref().map(|s| s.prob)
    }

    pub fn shift_action(&self) -> Option<usize> {
        self.shift_selected
    }
}

/// Forward record of an episode, replayed in reverse for gradients.
#[derive(Debug, Clone)]
pub struct EpisodeTape<T> {
    pub encoding: Encoding<T>,
    pub steps: Vec<StepRecord<T>>,
}

impl<T: Scalar> EpisodeTape<T> {
    pub fn new(params: &ModelParams<T>, words: &[usize]) -> Result<Self, NeuralError> {
        Ok(EpisodeTape {
            encoding: Encoding::new(params, words)?,
            steps: Vec::new(),
        })
    }

    fn current_state(&self) -> (Vec<T>, Vec<T>) {
        match self.steps.last() {
            Some(s) => (s.cell.h.clone(), s.cell.c.clone()),
            None => self.encoding.final_state(),
        }
    }

    /// Advance one step attending to the words in `span`; `neighbours` are the
    /// raw features of the navigable directions (STOP is appended). Returns the
    /// action distribution, STOP last.
    pub fn step(
        &mut self,
        params: &ModelParams<T>,
        span: Range<usize>,
        neighbours: &[Vec<T>],
        prev_action: &[T],
    ) -> Result<&[T], NeuralError> {
        let c = params.config;
        if span.is_empty() || span.end > self.encoding.len() {
            return Err(NeuralError::Shape {
                op: "text_attend",
                message: format!("span {span:?} outside {} words", self.encoding.len()),
            });
        }
        check_len("policy_step", prev_action, c.feature_dim)?;
        for v in neighbours {
            check_len("visual_attend", v, c.feature_dim)?;
        }
        let (h_prev, m_prev) = self.current_state();

        let text_keys: Vec<Vec<T>> = self.encoding.cells[span.clone()]
            .iter()
            .map(|cell| cell.h.clone())
            .collect();
        let text_query = params.w_u.matvec(&h_prev);
        let text = ops::attention_forward(&text_query, &text_keys, &text_keys);
        check_finite("text_attend", &text.attended)?;

        let mut views = neighbours.to_vec();
        views.push(params.stop_feature.data.clone());
        let projections: Vec<MlpCache<T>> = views
            .iter()
            .map(|v| ops::mlp_forward(&params.g_w1, &params.g_b1, &params.g_w2, &params.g_b2, v))
            .collect();
        let keys: Vec<Vec<T>> = projections.iter().map(|m| m.out.clone()).collect();
        let visual_query = params.w_v.matvec(&h_prev);
        let visual = ops::attention_forward(&visual_query, &keys, &views);
        check_finite("visual_attend", &visual.attended)?;

        let input = concat(&[&visual.attended, prev_action]);
        let cell = ops::lstm_forward(
            &params.pol_w_ih,
            &params.pol_w_hh,
            &params.pol_b,
            &input,
            &text.attended,
            &m_prev,
        );
        check_finite("policy_step", &cell.h)?;
        check_finite("policy_step", &cell.c)?;

        let action_key = params.w_a.matvec(&concat(&[&cell.h, &text.attended]));
        let logits: Vec<T> = keys.iter().map(|g| dot(&action_key, g)).collect();
        let action_probs = crate::scalar::softmax(&logits);
        check_finite("action_logits", &action_probs)?;

        self.steps.push(StepRecord {
            span,
            h_prev,
            m_prev,
            text_query,
            text_keys,
            text,
            views,
            projections,
            visual_query,
            visual,
            prev_action: prev_action.to_vec(),
            cell,
            action_key,
            action_probs,
            shift: None,
            shift_selected: None,
        });
        Ok(&self.steps.last().expect("just pushed").action_probs)
    }

    /// Evaluate the shift gate of the latest step for the chosen direction.
    pub fn shift(
        &mut self,
        params: &ModelParams<T>,
        action: usize,
        remaining: usize,
    ) -> Result<T, NeuralError> {
        let step = self
            .steps
            .last_mut()
            .ok_or(NeuralError::Empty("shift_probability"))?;
        if action >= step.views.len() {
            return Err(NeuralError::Shape {
                op: "shift_probability",
                message: format!("action {action} outside {} candidates", step.views.len()),
            });
        }
        let cache = ops::shift_forward(
            params,
            &step.cell.h,
            &step.cell.c,
            &step.views[action],
            &step.text.attended,
            remaining,
        );
        if !cache.prob.is_finite() {
            return Err(NeuralError::NonFinite("shift_probability"));
        }
        let p = cache.prob;
        step.shift = Some(cache);
        step.shift_selected = Some(action);
        Ok(p)
    }

    pub fn action_probs(&self) -> Vec<Vec<T>> {
        self.steps.iter().map(|s| s.action_probs.clone()).collect()
    }

    pub fn shift_probs(&self) -> Vec<T> {
        self.steps.iter().filter_map(|s| s.shift_prob()).collect()
    }

    /// Reverse pass. `loss` holds gradients with respect to the action logits
    /// of every step and the shift logit of every step that evaluated the gate.
    pub fn backward(
        &self,
        params: &ModelParams<T>,
        loss: &JointLoss<T>,
    ) -> Result<ModelParams<T>, NeuralError> {
        if loss.d_action_logits.len() != self.steps.len() {
            return Err(NeuralError::LengthMismatch {
                op: "backward",
                left: loss.d_action_logits.len(),
                right: self.steps.len(),
            });
        }
        let n_shift = self.steps.iter().filter(|s| s.shift.is_some()).count();
        if loss.d_shift_logits.len() != n_shift {
            return Err(NeuralError::LengthMismatch {
                op: "backward",
                left: loss.d_shift_logits.len(),
                right: n_shift,
            });
        }
        let hd = params.config.hidden_dim;
        let fd = params.config.feature_dim;
        let mut g = params.zeros_like();
        let mut d_words = vec![vec![T::zero(); hd]; self.encoding.len()];
        let mut dh_next = vec![T::zero(); hd];
        let mut dm_next = vec![T::zero(); hd];
        let mut shift_idx = n_shift;

        for (t, step) in self.steps.iter().enumerate().rev() {
            let mut dh = std::mem::replace(&mut dh_next, vec![T::zero(); hd]);
            let mut dm = std::mem::replace(&mut dm_next, vec![T::zero(); hd]);
            let mut d_text = vec![T::zero(); hd];
            let mut d_views = vec![vec![T::zero(); fd]; step.views.len()];
            let mut d_keys = vec![vec![T::zero(); params.config.proj_dim]; step.views.len()];

            if let (Some(cache), Some(action)) = (&step.shift, step.shift_selected) {
                shift_idx -= 1;
                let sg = ops::shift_backward(params, cache, loss.d_shift_logits[shift_idx], &mut g);
                add_into(&mut dh, &sg.dh);
                add_into(&mut dm, &sg.dm);
                add_into(&mut d_views[action], &sg.dselected);
                add_into(&mut d_text, &sg.dattended_text);
            }

            let d_logits = &loss.d_action_logits[t];
            if d_logits.len() != step.views.len() {
                return Err(NeuralError::LengthMismatch {
                    op: "action_logits",
                    left: d_logits.len(),
                    right: step.views.len(),
                });
            }
            let mut d_key = vec![T::zero(); step.action_key.len()];
            for (i, &dz) in d_logits.iter().enumerate() {
                axpy(&mut d_key, dz, &step.projections[i].out);
                axpy(&mut d_keys[i], dz, &step.action_key);
            }
            let hx = concat(&[&step.cell.h, &step.text.attended]);
            g.w_a.add_outer(&d_key, &hx);
            let d_hx = params.w_a.matvec_t(&d_key);
            add_into(&mut dh, &d_hx[..hd]);
            add_into(&mut d_text, &d_hx[hd..]);

            let cg = ops::lstm_backward(
                &params.pol_w_ih,
                &params.pol_w_hh,
                &step.cell,
                &dh,
                &dm,
                &mut g.pol_w_ih,
                &mut g.pol_w_hh,
                &mut g.pol_b,
            );
            add_into(&mut d_text, &cg.dh_in);
            dm_next = cg.dc_in;
            let d_visual = &cg.dx[..fd];

            let keys: Vec<Vec<T>> = step.projections.iter().map(|m| m.out.clone()).collect();
            let vg = ops::attention_backward(
                &step.visual_query,
                &keys,
                &step.views,
                &step.visual.weights,
                d_visual,
            );
            g.w_v.add_outer(&vg.dquery, &step.h_prev);
            let mut dh_prev = params.w_v.matvec_t(&vg.dquery);
            for i in 0..step.views.len() {
                add_into(&mut d_keys[i], &vg.dkeys[i]);
                add_into(&mut d_views[i], &vg.dvalues[i]);
                let dv = ops::mlp_backward(
                    &params.g_w1,
                    &params.g_w2,
                    &step.projections[i],
                    &d_keys[i],
                    &mut g.g_w1,
                    &mut g.g_b1,
                    &mut g.g_w2,
                    &mut g.g_b2,
                );
                add_into(&mut d_views[i], &dv);
            }
            add_into(&mut g.stop_feature.data, &d_views[step.stop_index()]);

            let tg = ops::attention_backward(
                &step.text_query,
                &step.text_keys,
                &step.text_keys,
                &step.text.weights,
                &d_text,
            );
            g.w_u.add_outer(&tg.dquery, &step.h_prev);
            add_into(&mut dh_prev, &params.w_u.matvec_t(&tg.dquery));
            for (j, w) in step.span.clone().enumerate() {
                add_into(&mut d_words[w], &tg.dkeys[j]);
                add_into(&mut d_words[w], &tg.dvalues[j]);
            }
            dh_next = dh_prev;
        }

        // the first step starts from the encoder's final state
        let last = self.encoding.len() - 1;
        add_into(&mut d_words[last], &dh_next);
        let mut dh_carry = vec![T::zero(); hd];
        let mut dc_carry = dm_next;
        for j in (0..self.encoding.len()).rev() {
            let mut dh = std::mem::replace(&mut dh_carry, vec![T::zero(); hd]);
            add_into(&mut dh, &d_words[j]);
            let cg = ops::lstm_backward(
                &params.enc_w_ih,
                &params.enc_w_hh,
                &self.encoding.cells[j],
                &dh,
                &dc_carry,
                &mut g.enc_w_ih,
                &mut g.enc_w_hh,
                &mut g.enc_b,
            );
            add_into(g.embedding.row_mut(self.encoding.words[j]), &cg.dx);
            dh_carry = cg.dh_in;
            dc_carry = cg.dc_in;
        }
        if let Some(name) = g.first_non_finite() {
            log::error!("non-finite gradient in {name}");
            return Err(NeuralError::NonFinite("backward"));
        }
        Ok(g)
    }
}
