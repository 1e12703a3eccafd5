use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::rng::seeded;
use crate::Scalar;

/// Layer sizes of the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Size of `h`, `m` and of every word state `u_j`.
    pub hidden_dim: usize,
    /// Raw visual feature size (appearance + 4 direction components).
    pub feature_dim: usize,
    /// Hidden layer of the feature projection `g`.
    pub mlp_hidden: usize,
    /// Output size of `g`.
    pub proj_dim: usize,
    /// Output size of the prior projection of the remaining-count one-hot.
    pub prior_dim: usize,
    /// One-hot capacity for the remaining sub-instruction count.
    pub remaining_capacity: usize,
}

impl ModelConfig {
    pub fn small(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 16,
            hidden_dim: 16,
            feature_dim: 20,
            mlp_hidden: 16,
            proj_dim: 16,
            prior_dim: 4,
            remaining_capacity: 8,
        }
    }

    /// Minimal sizes used for finite-difference checks.
    pub fn gradcheck() -> Self {
        ModelConfig {
            vocab_size: 12,
            embed_dim: 6,
            hidden_dim: 8,
            feature_dim: 6,
            mlp_hidden: 5,
            proj_dim: 4,
            prior_dim: 3,
            remaining_capacity: 4,
        }
    }
}

macro_rules! param_groups {
    ($($name:ident),* $(,)?) => {
        /// All learned weights. The same struct holds gradients.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct ModelParams<T> {
            pub config: ModelConfig,
            $(pub $name: Tensor<T>,)*
        }

        impl<T: Scalar> ModelParams<T> {
            pub const GROUP_NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn groups(&self) -> Vec<(&'static str, &Tensor<T>)> {
                vec![$((stringify!($name), &self.$name)),*]
            }

            pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
                vec![$((stringify!($name), &mut self.$name)),*]
            }

            pub fn group_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
                match name {
                    $(stringify!($name) => Some(&mut self.$name),)*
                    _ => None,
                }
            }
        }
    };
}

param_groups!(
    embedding, enc_w_ih, enc_w_hh, enc_b, pol_w_ih, pol_w_hh, pol_b, w_u, w_v, g_w1, g_b1, g_w2,
    g_b2, w_a, stop_feature, w_c0, b_c0, w_c1, b_c1, w_c2, b_c2, w_c3,
);

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: ModelConfig) -> Self {
        let c = config;
        let h = c.hidden_dim;
        let z = |shape: &[usize]| Tensor::zeros(shape);
        ModelParams {
            config,
            embedding: z(&[c.vocab_size, c.embed_dim]),
            enc_w_ih: z(&[4 * h, c.embed_dim]),
            enc_w_hh: z(&[4 * h, h]),
            enc_b: z(&[4 * h]),
            pol_w_ih: z(&[4 * h, 2 * c.feature_dim]),
            pol_w_hh: z(&[4 * h, h]),
            pol_b: z(&[4 * h]),
            w_u: z(&[h, h]),
            w_v: z(&[c.proj_dim, h]),
            g_w1: z(&[c.mlp_hidden, c.feature_dim]),
            g_b1: z(&[c.mlp_hidden]),
            g_w2: z(&[c.proj_dim, c.mlp_hidden]),
            g_b2: z(&[c.proj_dim]),
            w_a: z(&[c.proj_dim, 2 * h]),
            stop_feature: z(&[c.feature_dim]),
            w_c0: z(&[h, h]),
            b_c0: z(&[h]),
            w_c1: z(&[h, h + c.feature_dim + h]),
            b_c1: z(&[h]),
            w_c2: z(&[1, c.prior_dim + h]),
            b_c2: z(&[1]),
            w_c3: z(&[c.prior_dim, c.remaining_capacity]),
        }
    }

    /// Seeded initialization: uniform in `[-k, k]` with `k = 1/sqrt(fan_in)`,
    /// recurrent forget-gate biases set to 1.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = seeded(seed);
        let h = config.hidden_dim;
        let fan_in = |name: &str, t: &Tensor<T>| -> usize {
            match name {
                "enc_b" | "enc_w_hh" | "pol_b" | "pol_w_hh" => h,
                "embedding" => config.embed_dim,
                "stop_feature" => config.feature_dim,
                "g_b1" => config.feature_dim,
                "g_b2" => config.mlp_hidden,
                "b_c0" => h,
                "b_c1" => 2 * h + config.feature_dim,
                "b_c2" => config.prior_dim + h,
                _ => t.cols(),
            }
        };
        for (name, t) in p.groups_mut() {
            let k = 1.0 / (fan_in(name, t).max(1) as f64).sqrt();
            for v in t.data.iter_mut() {
                *v = T::of(rng.gen_range(-k..=k));
            }
        }
        for b in [&mut p.enc_b, &mut p.pol_b] {
            for v in &mut b.data[h..2 * h] {
                *v = T::one();
            }
        }
        p
    }

    /// Zero tensors with the same shapes, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    pub fn num_params(&self) -> usize {
        self.groups().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        let others = other.groups();
        for ((_, a), (_, b)) in self.groups_mut().into_iter().zip(others) {
            a.add_assign(b);
        }
    }

    pub fn global_norm(&self) -> T {
        self.groups()
            .iter()
            .map(|(_, t)| t.sum_squares())
            .sum::<T>()
            .sqrt()
    }

    pub fn scale(&mut self, s: T) {
        for (_, t) in self.groups_mut() {
            for v in t.data.iter_mut() {
                *v *= s;
            }
        }
    }

    /// `self -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &Self, lr: T) {
        let gs = grads.groups();
        for ((_, p), (_, g)) in self.groups_mut().into_iter().zip(gs) {
            for (pv, &gv) in p.data.iter_mut().zip(&g.data) {
                *pv -= lr * gv;
            }
        }
    }

    /// Name of the first group holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.groups()
            .into_iter()
            .find(|(_, t)| !t.all_finite())
            .map(|(n, _)| n)
    }

    /// Convert to another precision.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.config);
        let src = self.groups();
        for ((_, dst), (_, s)) in out.groups_mut().into_iter().zip(src) {
            for (d, &v) in dst.data.iter_mut().zip(&s.data) {
                *d = U::of(v.as_f64());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = ModelConfig::small(10);
        let a = ModelParams::<f64>::init(cfg, 5);
        let b = ModelParams::<f64>::init(cfg, 5);
        let c = ModelParams::<f64>::init(cfg, 6);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let h = cfg.hidden_dim;
        assert!(a.enc_b.data[h..2 * h].iter().all(|&v| v == 1.0));
        let k = 1.0 / (cfg.feature_dim as f64 * 2.0).sqrt();
        assert!(a.pol_w_ih.data.iter().all(|v| v.abs() <= k));
    }

    #[test]
    fn group_names_match_fields() {
        let p = ModelParams::<f32>::zeros(ModelConfig::small(4));
        let names: Vec<_> = p.groups().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, ModelParams::<f32>::GROUP_NAMES);
        assert_eq!(p.w_c1.shape, vec![16, 16 + 20 + 16]);
    }

    #[test]
    fn sgd_and_norm() {
        let mut p = ModelParams::<f64>::zeros(ModelConfig::small(2));
        let mut g = p.zeros_like();
        g.b_c2.data[0] = 3.0;
        g.b_c0.data[0] = 4.0;
        assert_eq!(g.global_norm(), 5.0);
        p.sgd_step(&g, 0.5);
        assert_eq!(p.b_c2.data[0], -1.5);
        let p32: ModelParams<f32> = p.cast();
        assert_eq!(p32.b_c2.data[0], -1.5f32);
    }
}
