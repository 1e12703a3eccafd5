use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, SyntheticFeatures};
use crate::dataset::{Episode, SubPath};
use crate::navgraph::{EnvGraph, Viewpoint};
use crate::neural::{ModelConfig, Vocab};
use crate::rng::{derive_seed, seeded, SeededRng};

pub const LANDMARKS: &[&str] = &[
    "kitchen", "sofa", "stairs", "door", "table", "bed", "lamp", "window", "sink", "piano",
    "closet", "plant", "mirror", "desk", "fireplace", "bathtub",
];

const TEMPLATE_WORDS: &[&str] = &[
    "go", "to", "the", "walk", "toward", "head", "turn", "left", "right", "continue", "straight",
    "and", "stop", "at",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorldConfig {
    pub n_nodes: usize,
    pub n_episodes: usize,
    /// Side of the square the viewpoints are scattered in (meters).
    pub box_size: f64,
    pub min_separation: f64,
    /// Viewpoints closer than this are connected.
    pub connect_radius: f64,
    /// Ground-truth path length bounds, in viewpoints.
    pub min_path: usize,
    pub max_path: usize,
    pub max_attempts: usize,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        ToyWorldConfig {
            n_nodes: 10,
            n_episodes: 8,
            box_size: 10.0,
            min_separation: 1.0,
            connect_radius: 4.0,
            min_path: 3,
            max_path: 6,
            max_attempts: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub graph: EnvGraph,
    pub episodes: Vec<Episode>,
}

impl ToyWorld {
    /// Vocabulary covering every word the templates can produce.
    pub fn vocab(&self) -> Vocab {
        toy_vocab()
    }
}

pub fn toy_vocab() -> Vocab {
    Vocab::build(TEMPLATE_WORDS.iter().chain(LANDMARKS).copied())
}

/// `n` worlds, world `w` seeded from `(seed, "world{w}")`.
pub fn toy_worlds(config: &ToyWorldConfig, n: usize, seed: u64) -> Result<Vec<ToyWorld>, AgentError> {
    (0..n)
        .map(|w| generate_toy_world(config, derive_seed(seed, &format!("world{w}"))))
        .collect()
}

/// Small model sized for the toy vocabulary and the given features.
pub fn toy_model_config(vocab: &Vocab, features: &SyntheticFeatures) -> ModelConfig {
    let mut config = ModelConfig::small(vocab.len());
    config.feature_dim = features.feature_dim();
    config
}

/// Random geometric world with templated, aligned episodes.
pub fn generate_toy_world(config: &ToyWorldConfig, seed: u64) -> Result<ToyWorld, AgentError> {
    if config.n_nodes < 4 {
        return Err(AgentError::Config("toy worlds need at least 4 viewpoints".into()));
    }
    if config.min_path < 2 || config.max_path < config.min_path {
        return Err(AgentError::Config("invalid path length bounds".into()));
    }
    let mut rng = seeded(seed);
    let scan = format!("toy{seed}");
    let graph = (0..config.max_attempts)
        .find_map(|_| random_graph(config, &scan, &mut rng))
        .ok_or_else(|| {
            AgentError::Generation(format!(
                "no connected graph after {} attempts",
                config.max_attempts
            ))
        })?;
    let mut episodes = Vec::with_capacity(config.n_episodes);
    for k in 0..config.n_episodes {
        let path = (0..config.max_attempts)
            .find_map(|_| random_path(config, &graph, &mut rng))
            .ok_or_else(|| {
                AgentError::Generation(format!(
                    "no path of {}..={} viewpoints in {scan}",
                    config.min_path, config.max_path
                ))
            })?;
        let ep = templated_episode(&graph, &format!("{scan}_{k}"), &path, &mut rng);
        ep.validate_in(&graph)?;
        episodes.push(ep);
    }
    Ok(ToyWorld { graph, episodes })
}

fn random_graph(config: &ToyWorldConfig, scan: &str, rng: &mut SeededRng) -> Option<EnvGraph> {
    let mut points: Vec<[f64; 3]> = Vec::with_capacity(config.n_nodes);
    let mut tries = 0;
    while points.len() < config.n_nodes {
        tries += 1;
        if tries > 100 * config.n_nodes {
            return None;
        }
        let p = [
            rng.gen_range(0.0..config.box_size),
            rng.gen_range(0.0..config.box_size),
            0.0,
        ];
        if points
            .iter()
            .all(|q| crate::navgraph::euclidean(*q, p) > config.min_separation)
        {
            points.push(p);
        }
    }
    let mut labels: Vec<&str> = LANDMARKS.to_vec();
    labels.shuffle(rng);
    let nodes: Vec<Viewpoint> = points
        .iter()
        .enumerate()
        .map(|(i, &position)| Viewpoint {
            id: format!("{scan}_v{i}"),
            position,
            label: Some(labels[i % labels.len()].to_string()),
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if crate::navgraph::euclidean(points[i], points[j]) <= config.connect_radius {
                edges.push((nodes[i].id.clone(), nodes[j].id.clone()));
            }
        }
    }
    let graph = EnvGraph::new(scan, nodes, &edges).ok()?;
    let connected = graph.distances_from(0).iter().all(|d| d.is_finite());
    connected.then_some(graph)
}

fn random_path(config: &ToyWorldConfig, graph: &EnvGraph, rng: &mut SeededRng) -> Option<Vec<usize>> {
    let a = rng.gen_range(0..graph.len());
    let b = rng.gen_range(0..graph.len());
    let path = graph.shortest_path(a, b)?;
    (config.min_path..=config.max_path)
        .contains(&path.len())
        .then_some(path)
}

fn heading(graph: &EnvGraph, a: usize, b: usize) -> f64 {
    let (p, q) = (graph.position(a), graph.position(b));
    (q[0] - p[0]).atan2(q[1] - p[1])
}

fn turn_word(before: f64, after: f64) -> &'static str {
    let mut d = after - before;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    if d.abs() < PI / 6.0 {
        "straight"
    } else if d > 0.0 {
        "right"
    } else {
        "left"
    }
}

fn templated_episode(graph: &EnvGraph, path_id: &str, path: &[usize], rng: &mut SeededRng) -> Episode {
    // sub-paths of one or two edges, sharing boundary viewpoints
    let mut sub_paths = Vec::new();
    let mut start = 0;
    while start + 1 < path.len() {
        let left = path.len() - 1 - start;
        let len = if left == 1 { 1 } else { rng.gen_range(1..=2) };
        sub_paths.push(SubPath::new(start, start + len));
        start += len;
    }
    let last = sub_paths.len() - 1;
    let sub_words: Vec<Vec<String>> = sub_paths
        .iter()
        .enumerate()
        .map(|(k, sp)| {
            let label = graph
                .viewpoint(path[sp.end_idx])
                .label
                .clone()
                .unwrap_or_else(|| "room".into());
            let text = if k == last && k > 0 {
                format!("stop at the {label}")
            } else if k == 0 {
                let verb = ["go to", "walk toward", "head to"][rng.gen_range(0..3)];
                if k == last {
                    format!("{verb} the {label} and stop")
                } else {
                    format!("{verb} the {label}")
                }
            } else {
                let before = heading(graph, path[sp.start_idx - 1], path[sp.start_idx]);
                let after = heading(graph, path[sp.start_idx], path[sp.start_idx + 1]);
                match turn_word(before, after) {
                    "straight" => format!("continue straight to the {label}"),
                    dir => format!("turn {dir} toward the {label}"),
                }
            };
            text.split_whitespace().map(str::to_string).collect()
        })
        .collect();
    Episode::from_words(
        path_id,
        graph.scan.clone(),
        path.iter().map(|&i| graph.id(i).to_string()).collect(),
        sub_words,
        sub_paths,
        heading(graph, path[0], path[1]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worlds_are_seeded_and_valid() {
        let cfg = ToyWorldConfig::default();
        let a = generate_toy_world(&cfg, 9).unwrap();
        let b = generate_toy_world(&cfg, 9).unwrap();
        assert_eq!(a.graph.to_json(), b.graph.to_json());
        assert_eq!(a.episodes, b.episodes);
        let vocab = a.vocab();
        for ep in &a.episodes {
            ep.validate_in(&a.graph).unwrap();
            assert!((3..=6).contains(&ep.path.len()));
            for sp in &ep.sub_paths {
                assert!((2..=3).contains(&sp.viewpoints()));
            }
            for s in &ep.sub_instructions {
                assert!(s.words.iter().all(|w| vocab.id(w) != crate::neural::UNK_ID));
            }
        }
        for i in 0..a.graph.len() {
            for j in i + 1..a.graph.len() {
                let d = crate::navgraph::euclidean(a.graph.position(i), a.graph.position(j));
                assert!(d > cfg.min_separation);
            }
        }
    }

    #[test]
    fn rejects_tiny_worlds() {
        let cfg = ToyWorldConfig {
            n_nodes: 3,
            ..Default::default()
        };
        assert!(generate_toy_world(&cfg, 1).is_err());
    }

    #[test]
    fn turn_words() {
        assert_eq!(turn_word(0.0, 0.1), "straight");
        assert_eq!(turn_word(0.0, PI / 2.0), "right");
        assert_eq!(turn_word(0.0, -PI / 2.0), "left");
        assert_eq!(turn_word(3.0, -3.0), "straight");
    }
}
