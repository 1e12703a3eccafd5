use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::navgraph::{direction_features, EnvGraph, GraphError};
use crate::rng::{derive_seed, seeded};
use crate::Scalar;

/// Stand-in visual features: a seeded appearance vector per viewpoint
/// followed by the direction feature of the move.
///
/// Appearance is keyed by the viewpoint label when present, so the same
/// landmark looks the same in every world; unlabeled viewpoints are keyed by
/// scan and id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticFeatures {
    pub appearance_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticFeatures {
    fn default() -> Self {
        SyntheticFeatures {
            appearance_dim: 16,
            seed: 0,
        }
    }
}

impl SyntheticFeatures {
    pub fn feature_dim(&self) -> usize {
        self.appearance_dim + 4
    }

    pub fn appearance(&self, graph: &EnvGraph, idx: usize) -> Vec<f64> {
        let vp = graph.viewpoint(idx);
        let key = match &vp.label {
            Some(label) => format!("label:{label}"),
            None => format!("vp:{}/{}", graph.scan, vp.id),
        };
        let mut rng = seeded(derive_seed(self.seed, &key));
        (0..self.appearance_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect()
    }

    /// Feature of moving from `from` to its neighbour `to`.
    pub fn view(&self, graph: &EnvGraph, from: usize, to: usize) -> Result<Vec<f64>, GraphError> {
        let dir = direction_features(graph.position(from), graph.position(to))?;
        let mut v = self.appearance(graph, to);
        v.extend_from_slice(&dir.0);
        Ok(v)
    }

    pub fn view_as<T: Scalar>(
        &self,
        graph: &EnvGraph,
        from: usize,
        to: usize,
    ) -> Result<Vec<T>, GraphError> {
        Ok(self
            .view(graph, from, to)?
            .into_iter()
            .map(T::of)
            .collect())
    }
}
