//! Viewpoint graphs: positions, navigability edges and geodesic distances.
//!
//! Headings are measured in the horizontal plane from the +y axis, clockwise
//! (towards +x). Elevation is `atan2(dz, horizontal distance)`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("duplicate viewpoint id `{0}`")]
    DuplicateNode(String),
    #[error("edge references unknown viewpoint `{0}`")]
    DanglingEdge(String),
    #[error("viewpoint `{0}` has a non-finite coordinate")]
    NonFinite(String),
    #[error("self-loop on viewpoint `{0}`")]
    SelfLoop(String),
    #[error("edge {0} - {1} has zero length")]
    ZeroLength(String, String),
    #[error("unknown viewpoint `{0}`")]
    UnknownViewpoint(String),
    #[error("viewpoints `{0}` and `{1}` are not adjacent")]
    NotAdjacent(String, String),
    #[error("zero displacement has no direction")]
    ZeroDisplacement,
    #[error("graph file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: String,
    pub position: [f64; 3],
    /// Optional semantic label; visual features are keyed on it when present.
    pub label: Option<String>,
}

/// Geodesic distance that may be unreachable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geodesic {
    Reachable(f64),
    Unreachable,
}

impl Geodesic {
    /// Meters, with `+inf` for unreachable pairs.
    pub fn meters(self) -> f64 {
        match self {
            Geodesic::Reachable(d) => d,
            Geodesic::Unreachable => f64::INFINITY,
        }
    }

    pub fn is_reachable(self) -> bool {
        matches!(self, Geodesic::Reachable(_))
    }

    fn from_meters(d: f64) -> Self {
        if d.is_finite() {
            Geodesic::Reachable(d)
        } else {
            Geodesic::Unreachable
        }
    }
}

#[derive(Debug)]
pub struct EnvGraph {
    pub scan: String,
    nodes: Vec<Viewpoint>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    edges: Vec<(usize, usize)>,
    all_pairs: OnceLock<Vec<Vec<f64>>>,
}

impl Clone for EnvGraph {
    fn clone(&self) -> Self {
        EnvGraph {
            scan: self.scan.clone(),
            nodes: self.nodes.clone(),
            index: self.index.clone(),
            adjacency: self.adjacency.clone(),
            edges: self.edges.clone(),
            all_pairs: OnceLock::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    x: f64,
    y: f64,
    z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRecord {
    scan: String,
    nodes: Vec<NodeRecord>,
    edges: Vec<(String, String)>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl EnvGraph {
    /// Build and validate a graph. Duplicate undirected edges collapse into one.
    pub fn new(
        scan: impl Into<String>,
        nodes: Vec<Viewpoint>,
        edges: &[(String, String)],
    ) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if !n.position.iter().all(|c| c.is_finite()) {
                return Err(GraphError::NonFinite(n.id.clone()));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.id.clone()));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::new();
        let mut edge_list = Vec::new();
        for (a, b) in edges {
            let ia = *index
                .get(a)
                .ok_or_else(|| GraphError::DanglingEdge(a.clone()))?;
            let ib = *index
                .get(b)
                .ok_or_else(|| GraphError::DanglingEdge(b.clone()))?;
            if ia == ib {
                return Err(GraphError::SelfLoop(a.clone()));
            }
            let key = (ia.min(ib), ia.max(ib));
            if !seen.insert(key) {
                continue;
            }
            let w = euclidean(nodes[ia].position, nodes[ib].position);
            if w <= 0.0 {
                return Err(GraphError::ZeroLength(a.clone(), b.clone()));
            }
            adjacency[ia].push((ib, w));
            adjacency[ib].push((ia, w));
            edge_list.push(key);
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(j, _)| j);
        }
        Ok(EnvGraph {
            scan: scan.into(),
            nodes,
            index,
            adjacency,
            edges: edge_list,
            all_pairs: OnceLock::new(),
        })
    }

    /// Parse the canonical JSON graph file.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let rec: GraphRecord =
            serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        let nodes = rec
            .nodes
            .into_iter()
            .map(|n| Viewpoint {
                id: n.id,
                position: [n.x, n.y, n.z],
                label: n.label,
            })
            .collect();
        EnvGraph::new(rec.scan, nodes, &rec.edges)
    }

    pub fn to_json(&self) -> String {
        let rec = GraphRecord {
            scan: self.scan.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    x: n.position[0],
                    y: n.position[1],
                    z: n.position[2],
                    label: n.label.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|&(a, b)| (self.nodes[a].id.clone(), self.nodes[b].id.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&rec).expect("graph serializes")
    }

    /// Ingest a Matterport-style connectivity file: a list of
    /// `{image_id, pose[16], included, unobstructed[]}` records. Positions come
    /// from the translation column of the row-major pose; edges join included
    /// viewpoints whose `unobstructed` flags are set.
    pub fn from_connectivity_json(scan: &str, text: &str) -> Result<Self, GraphError> {
        #[derive(Deserialize)]
        struct Conn {
            image_id: String,
            pose: Vec<f64>,
            #[serde(default = "yes")]
            included: bool,
            unobstructed: Vec<bool>,
        }
        fn yes() -> bool {
            true
        }
        let recs: Vec<Conn> =
            serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, r) in recs.iter().enumerate() {
            if !r.included {
                continue;
            }
            if r.pose.len() != 16 {
                return Err(GraphError::Format(format!(
                    "pose of `{}` has {} entries",
                    r.image_id,
                    r.pose.len()
                )));
            }
            nodes.push(Viewpoint {
                id: r.image_id.clone(),
                position: [r.pose[3], r.pose[7], r.pose[11]],
                label: None,
            });
            for (j, &open) in r.unobstructed.iter().enumerate() {
                if open && j > i && recs.get(j).map(|o| o.included).unwrap_or(false) {
                    edges.push((r.image_id.clone(), recs[j].image_id.clone()));
                }
            }
        }
        EnvGraph::new(scan, nodes, &edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Viewpoint] {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.edges.iter().map(move |&(a, b)| {
            let w = self.adjacency[a]
                .iter()
                .find(|&&(j, _)| j == b)
                .map(|&(_, w)| w)
                .unwrap_or(f64::NAN);
            (self.nodes[a].id.as_str(), self.nodes[b].id.as_str(), w)
        })
    }

    pub fn idx(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownViewpoint(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn viewpoint(&self, idx: usize) -> &Viewpoint {
        &self.nodes[idx]
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.nodes[idx].id
    }

    pub fn position(&self, idx: usize) -> [f64; 3] {
        self.nodes[idx].position
    }

    /// Neighbours of `idx` with edge lengths, ordered by node index.
    pub fn neighbors(&self, idx: usize) -> &[(usize, f64)] {
        &self.adjacency[idx]
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .iter()
            .find(|&&(j, _)| j == b)
            .map(|&(_, w)| w)
    }

    /// Single-source Dijkstra. Unreachable nodes get `+inf`.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        self.dijkstra(source).0
    }

    fn dijkstra(&self, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry(0.0, source));
        while let Some(HeapEntry(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = Some(u);
                    heap.push(HeapEntry(nd, v));
                }
            }
        }
        (dist, prev)
    }

    fn all_pairs(&self) -> &Vec<Vec<f64>> {
        self.all_pairs.get_or_init(|| {
            let mut table: Vec<Vec<f64>> =
                (0..self.nodes.len()).map(|s| self.distances_from(s)).collect();
            // the two directions can differ in the last bit through summation order
            for i in 0..table.len() {
                for j in 0..i {
                    table[i][j] = table[j][i];
                }
            }
            table
        })
    }

    /// Geodesic distance by node index, `+inf` when unreachable.
    pub fn dist_idx(&self, a: usize, b: usize) -> f64 {
        self.all_pairs()[a][b]
    }

    pub fn shortest_dist(&self, a: &str, b: &str) -> Result<Geodesic, GraphError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        Ok(Geodesic::from_meters(self.dist_idx(ia, ib)))
    }

    /// Minimal-weight viewpoint sequence from `a` to `b`, inclusive.
    pub fn shortest_path(&self, a: usize, b: usize) -> Option<Vec<usize>> {
        let (dist, prev) = self.dijkstra(a);
        if !dist[b].is_finite() {
            return None;
        }
        let mut path = vec![b];
        let mut cur = b;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    /// Sum of edge lengths along a path of node indices. Repeated consecutive
    /// viewpoints (stationary steps) contribute zero.
    pub fn path_length_idx(&self, path: &[usize]) -> Result<f64, GraphError> {
        let mut total = 0.0;
        for w in path.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            total += self.edge_weight(w[0], w[1]).ok_or_else(|| {
                GraphError::NotAdjacent(self.id(w[0]).to_string(), self.id(w[1]).to_string())
            })?;
        }
        Ok(total)
    }

    pub fn path_length<S: AsRef<str>>(&self, path: &[S]) -> Result<f64, GraphError> {
        let idx = self.indices(path)?;
        self.path_length_idx(&idx)
    }

    pub fn indices<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<usize>, GraphError> {
        ids.iter().map(|s| self.idx(s.as_ref())).collect()
    }
}

pub fn euclidean(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// `[sin(heading), cos(heading), sin(elevation), cos(elevation)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionFeature(pub [f64; 4]);

pub fn direction_features(from: [f64; 3], to: [f64; 3]) -> Result<DirectionFeature, GraphError> {
    let (dx, dy, dz) = (to[0] - from[0], to[1] - from[1], to[2] - from[2]);
    let horizontal = dx.hypot(dy);
    if horizontal == 0.0 && dz == 0.0 {
        return Err(GraphError::ZeroDisplacement);
    }
    let heading = dx.atan2(dy);
    let elevation = dz.atan2(horizontal);
    Ok(DirectionFeature([
        heading.sin(),
        heading.cos(),
        elevation.sin(),
        elevation.cos(),
    ]))
}
