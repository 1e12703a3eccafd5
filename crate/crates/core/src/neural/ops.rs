//! Forward and backward passes of the individual building blocks.
//!
//! Every `*_backward` accumulates parameter gradients into the supplied
//! tensors and returns the gradients of its inputs.

use super::tensor::{add_into, axpy, dot, Tensor};
use crate::scalar::{sigmoid, softmax};
use crate::Scalar;

/// Recurrent cell state after one step, with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    pub x: Vec<T>,
    pub h_in: Vec<T>,
    pub c_in: Vec<T>,
    pub i: Vec<T>,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub o: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

/// Standard four-gate cell; gate rows are ordered input, forget, candidate, output.
pub fn lstm_forward<T: Scalar>(
    w_ih: &Tensor<T>,
    w_hh: &Tensor<T>,
    b: &Tensor<T>,
    x: &[T],
    h_in: &[T],
    c_in: &[T],
) -> LstmCache<T> {
    let hd = h_in.len();
    let mut pre = w_ih.matvec(x);
    add_into(&mut pre, &w_hh.matvec(h_in));
    add_into(&mut pre, &b.data);
    let i: Vec<T> = pre[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<T> = pre[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<T> = pre[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
    let o: Vec<T> = pre[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<T> = (0..hd).map(|k| f[k] * c_in[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<T> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<T> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    LstmCache {
        x: x.to_vec(),
        h_in: h_in.to_vec(),
        c_in: c_in.to_vec(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h,
    }
}

pub struct LstmInputGrads<T> {
    pub dx: Vec<T>,
    pub dh_in: Vec<T>,
    pub dc_in: Vec<T>,
}

#[allow(clippy::too_many_arguments)]
pub fn lstm_backward<T: Scalar>(
    w_ih: &Tensor<T>,
    w_hh: &Tensor<T>,
    cache: &LstmCache<T>,
    dh: &[T],
    dc: &[T],
    g_w_ih: &mut Tensor<T>,
    g_w_hh: &mut Tensor<T>,
    g_b: &mut Tensor<T>,
) -> LstmInputGrads<T> {
    let hd = cache.h.len();
    let one = T::one();
    let mut dpre = vec![T::zero(); 4 * hd];
    let mut dc_in = vec![T::zero(); hd];
    for k in 0..hd {
        let d_o = dh[k] * cache.tanh_c[k];
        let dct = dc[k] + dh[k] * cache.o[k] * (one - cache.tanh_c[k] * cache.tanh_c[k]);
        let di = dct * cache.g[k];
        let df = dct * cache.c_in[k];
        let dg = dct * cache.i[k];
        dc_in[k] = dct * cache.f[k];
        dpre[k] = di * cache.i[k] * (one - cache.i[k]);
        dpre[hd + k] = df * cache.f[k] * (one - cache.f[k]);
        dpre[2 * hd + k] = dg * (one - cache.g[k] * cache.g[k]);
        dpre[3 * hd + k] = d_o * cache.o[k] * (one - cache.o[k]);
    }
    g_w_ih.add_outer(&dpre, &cache.x);
    g_w_hh.add_outer(&dpre, &cache.h_in);
    add_into(&mut g_b.data, &dpre);
    LstmInputGrads {
        dx: w_ih.matvec_t(&dpre),
        dh_in: w_hh.matvec_t(&dpre),
        dc_in,
    }
}

/// Soft attention weights and the attended vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionResult<T> {
    pub weights: Vec<T>,
    pub attended: Vec<T>,
}

/// `weights = softmax(query · key_j)`, `attended = Σ weights_j value_j`.
pub fn attention_forward<T: Scalar>(
    query: &[T],
    keys: &[Vec<T>],
    values: &[Vec<T>],
) -> AttentionResult<T> {
    let logits: Vec<T> = keys.iter().map(|k| dot(query, k)).collect();
    let weights = softmax(&logits);
    let mut attended = vec![T::zero(); values[0].len()];
    for (w, v) in weights.iter().zip(values) {
        axpy(&mut attended, *w, v);
    }
    AttentionResult { weights, attended }
}

pub struct AttentionGrads<T> {
    pub dquery: Vec<T>,
    pub dkeys: Vec<Vec<T>>,
    pub dvalues: Vec<Vec<T>>,
}

pub fn attention_backward<T: Scalar>(
    query: &[T],
    keys: &[Vec<T>],
    values: &[Vec<T>],
    weights: &[T],
    d_attended: &[T],
) -> AttentionGrads<T> {
    let dw: Vec<T> = values.iter().map(|v| dot(d_attended, v)).collect();
    let mean: T = weights.iter().zip(&dw).map(|(&a, &d)| a * d).sum();
    let dz: Vec<T> = weights
        .iter()
        .zip(&dw)
        .map(|(&a, &d)| a * (d - mean))
        .collect();
    let mut dquery = vec![T::zero(); query.len()];
    for (d, k) in dz.iter().zip(keys) {
        axpy(&mut dquery, *d, k);
    }
    AttentionGrads {
        dquery,
        dkeys: dz
            .iter()
            .map(|&d| query.iter().map(|&q| d * q).collect())
            .collect(),
        dvalues: weights
            .iter()
            .map(|&a| d_attended.iter().map(|&d| a * d).collect())
            .collect(),
    }
}

/// Two-layer feature projection `g(v) = W2 tanh(W1 v + b1) + b2`.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    pub input: Vec<T>,
    pub hidden: Vec<T>,
    pub out: Vec<T>,
}

pub fn mlp_forward<T: Scalar>(
    w1: &Tensor<T>,
    b1: &Tensor<T>,
    w2: &Tensor<T>,
    b2: &Tensor<T>,
    v: &[T],
) -> MlpCache<T> {
    let mut a = w1.matvec(v);
    add_into(&mut a, &b1.data);
    let hidden: Vec<T> = a.iter().map(|x| x.tanh()).collect();
    let mut out = w2.matvec(&hidden);
    add_into(&mut out, &b2.data);
    MlpCache {
        input: v.to_vec(),
        hidden,
        out,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mlp_backward<T: Scalar>(
    w1: &Tensor<T>,
    w2: &Tensor<T>,
    cache: &MlpCache<T>,
    dout: &[T],
    g_w1: &mut Tensor<T>,
    g_b1: &mut Tensor<T>,
    g_w2: &mut Tensor<T>,
    g_b2: &mut Tensor<T>,
) -> Vec<T> {
    g_w2.add_outer(dout, &cache.hidden);
    add_into(&mut g_b2.data, dout);
    let dh = w2.matvec_t(dout);
    let da: Vec<T> = dh
        .iter()
        .zip(&cache.hidden)
        .map(|(&d, &r)| d * (T::one() - r * r))
        .collect();
    g_w1.add_outer(&da, &cache.input);
    add_into(&mut g_b1.data, &da);
    w1.matvec_t(&da)
}

/// Cached shifting-module activations for one step.
#[derive(Debug, Clone)]
pub struct ShiftCache<T> {
    pub h: Vec<T>,
    pub m: Vec<T>,
    pub selected: Vec<T>,
    pub attended_text: Vec<T>,
    pub c0: Vec<T>,
    pub gate_in: Vec<T>,
    pub gate: Vec<T>,
    pub tanh_m: Vec<T>,
    pub hc: Vec<T>,
    pub slot: usize,
    pub prior: Vec<T>,
    pub head_in: Vec<T>,
    pub logit: T,
    pub prob: T,
}

/// One-hot slot for the remaining count; values past capacity clamp to the last slot.
pub fn remaining_slot(remaining: usize, capacity: usize) -> usize {
    if remaining >= capacity {
        log::warn!("remaining count {remaining} clamped to {}", capacity - 1);
        capacity - 1
    } else {
        remaining
    }
}

#[allow(clippy::too_many_arguments)]
pub fn shift_forward<T: Scalar>(
    p: &super::ModelParams<T>,
    h: &[T],
    m: &[T],
    selected: &[T],
    attended_text: &[T],
    remaining: usize,
) -> ShiftCache<T> {
    let mut c0 = p.w_c0.matvec(h);
    add_into(&mut c0, &p.b_c0.data);
    let gate_in: Vec<T> = c0
        .iter()
        .chain(selected)
        .chain(attended_text)
        .copied()
        .collect();
    let mut pre = p.w_c1.matvec(&gate_in);
    add_into(&mut pre, &p.b_c1.data);
    let gate: Vec<T> = pre.iter().map(|&v| sigmoid(v)).collect();
    let tanh_m: Vec<T> = m.iter().map(|v| v.tanh()).collect();
    let hc: Vec<T> = gate.iter().zip(&tanh_m).map(|(&a, &b)| a * b).collect();
    let slot = remaining_slot(remaining, p.config.remaining_capacity);
    let prior: Vec<T> = (0..p.w_c3.rows()).map(|r| p.w_c3.row(r)[slot]).collect();
    let head_in: Vec<T> = prior.iter().chain(&hc).copied().collect();
    let logit = dot(p.w_c2.row(0), &head_in) + p.b_c2.data[0];
    ShiftCache {
        h: h.to_vec(),
        m: m.to_vec(),
        selected: selected.to_vec(),
        attended_text: attended_text.to_vec(),
        c0,
        gate_in,
        gate,
        tanh_m,
        hc,
        slot,
        prior,
        head_in,
        logit,
        prob: sigmoid(logit),
    }
}

pub struct ShiftInputGrads<T> {
    pub dh: Vec<T>,
    pub dm: Vec<T>,
    pub dselected: Vec<T>,
    pub dattended_text: Vec<T>,
}

pub fn shift_backward<T: Scalar>(
    p: &super::ModelParams<T>,
    cache: &ShiftCache<T>,
    dlogit: T,
    g: &mut super::ModelParams<T>,
) -> ShiftInputGrads<T> {
    let hd = cache.h.len();
    let pd = cache.prior.len();
    let fd = cache.selected.len();
    g.b_c2.data[0] += dlogit;
    g.w_c2.add_outer(&[dlogit], &cache.head_in);
    let dhead: Vec<T> = p.w_c2.row(0).iter().map(|&w| w * dlogit).collect();
    for (r, &d) in dhead[..pd].iter().enumerate() {
        g.w_c3.row_mut(r)[cache.slot] += d;
    }
    let dhc = &dhead[pd..];
    let one = T::one();
    let mut dpre = vec![T::zero(); hd];
    let mut dm = vec![T::zero(); hd];
    for k in 0..hd {
        let dgate = dhc[k] * cache.tanh_m[k];
        let dtanh = dhc[k] * cache.gate[k];
        dm[k] = dtanh * (one - cache.tanh_m[k] * cache.tanh_m[k]);
        dpre[k] = dgate * cache.gate[k] * (one - cache.gate[k]);
    }
    g.w_c1.add_outer(&dpre, &cache.gate_in);
    add_into(&mut g.b_c1.data, &dpre);
    let dgate_in = p.w_c1.matvec_t(&dpre);
    let dc0 = &dgate_in[..hd];
    g.w_c0.add_outer(dc0, &cache.h);
    add_into(&mut g.b_c0.data, dc0);
    ShiftInputGrads {
        dh: p.w_c0.matvec_t(dc0),
        dm,
        dselected: dgate_in[hd..hd + fd].to_vec(),
        dattended_text: dgate_in[hd + fd..].to_vec(),
    }
}
