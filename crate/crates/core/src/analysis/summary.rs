use serde::{Deserialize, Serialize};

use super::{smoothed_bleu4, AnalysisError, ClusterAssignment, SimilarityMatrix};
use crate::agent::ShiftEvent;
use crate::dataset::{gt_shift_signal, Episode};
use crate::metrics::{ndtw, SUCCESS_THRESHOLD};
use crate::navgraph::EnvGraph;
use crate::Scalar;

/// How a trajectory is cut into per-sub-instruction slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmentation {
    /// Cut where the agent's own shifts advanced the pointer.
    #[default]
    Predicted,
    /// Re-walk the trajectory and cut wherever the ground-truth signal fires.
    GroundTruth,
}

/// Outcome of one sub-instruction within a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubInstructionResult {
    pub path_id: String,
    pub sub_idx: usize,
    pub words: Vec<String>,
    /// Geodesic distance from the sub-path end to where the agent left the
    /// sub-instruction (meters).
    pub distance: f64,
    pub ndtw: f64,
    /// Viewpoints in the annotated sub-path.
    pub viewpoints: usize,
}

impl SubInstructionResult {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// 1-based, ascending in mean distance.
    pub rank: usize,
    pub cluster: usize,
    pub mean_distance: f64,
    pub mean_ndtw: f64,
    pub frequency: usize,
    pub mean_viewpoints: f64,
    pub representative: String,
    pub representative_index: usize,
    pub members: Vec<usize>,
}

/// Per-cluster means, ranked by mean distance (ties by cluster label).
///
/// `results[i]` belongs to item `i` of the matrix. The representative is the
/// member with the highest mean similarity to the other members, the lowest
/// index winning ties.
pub fn cluster_summary<T: Scalar>(
    assignment: &ClusterAssignment,
    matrix: &SimilarityMatrix<T>,
    results: &[Option<SubInstructionResult>],
) -> Result<Vec<ClusterSummary>, AnalysisError> {
    if results.len() != matrix.len() || assignment.labels.len() != matrix.len() {
        return Err(AnalysisError::LengthMismatch {
            results: results.len(),
            items: matrix.len(),
        });
    }
    let mut out = Vec::with_capacity(assignment.k);
    for (cluster, members) in assignment.clusters().into_iter().enumerate() {
        let mut records = Vec::with_capacity(members.len());
        for &i in &members {
            let r = results[i].as_ref().ok_or_else(|| AnalysisError::MissingResult {
                index: i,
                text: matrix.items[i].clone(),
            })?;
            records.push(r);
        }
        let f = members.len() as f64;
        let mut rep = (f64::NEG_INFINITY, members[0]);
        for &i in &members {
            let score = if members.len() == 1 {
                1.0
            } else {
                members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| matrix.get(i, j).as_f64())
                    .sum::<f64>()
                    / (f - 1.0)
            };
            if score > rep.0 {
                rep = (score, i);
            }
        }
        out.push(ClusterSummary {
            rank: 0,
            cluster,
            mean_distance: records.iter().map(|r| r.distance).sum::<f64>() / f,
            mean_ndtw: records.iter().map(|r| r.ndtw).sum::<f64>() / f,
            frequency: members.len(),
            mean_viewpoints: records.iter().map(|r| r.viewpoints as f64).sum::<f64>() / f,
            representative: matrix.items[rep.1].clone(),
            representative_index: rep.1,
            members,
        });
    }
    out.sort_by(|a, b| {
        a.mean_distance
            .total_cmp(&b.mean_distance)
            .then(a.cluster.cmp(&b.cluster))
    });
    for (r, s) in out.iter_mut().enumerate() {
        s.rank = r + 1;
    }
    Ok(out)
}

/// Cut a rollout trajectory into per-sub-instruction slices and score each
/// one. `shift_events` holds one event per step, as recorded by a rollout.
///
/// A sub-instruction ends at the position reached by the step on which the
/// pointer left it, and the next one starts there. Sub-instructions still
/// active or never reached when the rollout ends take the final viewpoint.
pub fn subinstruction_results(
    graph: &EnvGraph,
    episode: &Episode,
    trajectory: &[String],
    shift_events: &[ShiftEvent],
    segmentation: Segmentation,
) -> Result<Vec<SubInstructionResult>, AnalysisError> {
    episode.validate_in(graph)?;
    let traj = trajectory;
    let n_sub = episode.sub_instructions.len();
    if traj.is_empty() || n_sub == 0 {
        return Ok(Vec::new());
    }
    let last = traj.len() - 1;
    let after = |step: usize| (step + 1).min(last);

    // (start, end) trajectory indices for each sub-instruction
    let mut cuts: Vec<(usize, usize)> = Vec::with_capacity(n_sub);
    let mut start = 0;
    match segmentation {
        Segmentation::Predicted => {
            for e in shift_events.iter().filter(|e| e.advanced) {
                if cuts.len() + 1 >= n_sub {
                    break;
                }
                let end = after(e.step);
                cuts.push((start, end));
                start = end;
            }
        }
        Segmentation::GroundTruth => {
            for e in shift_events {
                let pos = after(e.step);
                while cuts.len() + 1 < n_sub
                    && gt_shift_signal(graph, episode, &traj[pos], cuts.len())?
                {
                    cuts.push((start, pos));
                    start = pos;
                }
            }
        }
    }
    while cuts.len() < n_sub {
        cuts.push((start, last));
        start = last;
    }

    let mut out = Vec::with_capacity(n_sub);
    for (k, &(s, e)) in cuts.iter().enumerate() {
        let sp = episode.sub_paths[k];
        let reference = &episode.path[sp.start_idx..=sp.end_idx];
        let left_at = &traj[e];
        out.push(SubInstructionResult {
            path_id: episode.path_id.clone(),
            sub_idx: k,
            words: episode.sub_instructions[k].lowercase_words(),
            distance: graph
                .shortest_dist(left_at, &episode.path[sp.end_idx])?
                .meters(),
            ndtw: ndtw(graph, &traj[s..=e], reference, SUCCESS_THRESHOLD)?,
            viewpoints: sp.viewpoints(),
        });
    }
    Ok(out)
}

/// Mean over generated sub-instructions of the best smoothed BLEU-4 against
/// the annotated sub-instructions of the same instruction. `None` when there
/// is nothing to score.
pub fn chunking_quality<S: AsRef<str>>(
    generated: &[Vec<Vec<S>>],
    annotated: &[Vec<Vec<S>>],
) -> Result<Option<f64>, AnalysisError> {
    if generated.len() != annotated.len() {
        return Err(AnalysisError::LengthMismatch {
            results: generated.len(),
            items: annotated.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (gen, ann) in generated.iter().zip(annotated) {
        for cand in gen {
            let best = ann
                .iter()
                .map(|r| smoothed_bleu4(cand, r))
                .fold(0.0, f64::max);
            total += best;
            count += 1;
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}
