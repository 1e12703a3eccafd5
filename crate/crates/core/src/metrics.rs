//! Trajectory metrics and shift-prediction confusion statistics.
//!
//! DTW aligns two viewpoint sequences monotonically with diagonal, horizontal
//! and vertical moves, covering every element of both; the local cost is the
//! geodesic distance between the aligned viewpoints. nDTW normalizes by the
//! reference length times the success threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::navgraph::{EnvGraph, GraphError};

/// Success threshold (meters) on the final distance to the goal.
pub const SUCCESS_THRESHOLD: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("empty reference")]
    EmptyReference,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub pl: f64,
    pub ne: f64,
    pub oracle_success: bool,
    pub success: bool,
    pub spl: f64,
    pub ndtw: f64,
}

/// Dynamic time warping cost over node indices.
pub fn dtw_idx(graph: &EnvGraph, trajectory: &[usize], reference: &[usize]) -> f64 {
    let (n, m) = (trajectory.len(), reference.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &t in trajectory {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = graph.dist_idx(t, reference[j - 1]);
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    if n == 0 {
        return f64::INFINITY;
    }
    prev[m]
}

pub fn ndtw_from_dtw(dtw: f64, reference_len: usize, threshold: f64) -> f64 {
    (-dtw / (reference_len as f64 * threshold)).exp()
}

pub fn dtw<S: AsRef<str>, R: AsRef<str>>(
    graph: &EnvGraph,
    trajectory: &[S],
    reference: &[R],
) -> Result<f64, MetricError> {
    if trajectory.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let t = graph.indices(trajectory)?;
    let r = graph.indices(reference)?;
    Ok(dtw_idx(graph, &t, &r))
}

pub fn ndtw<S: AsRef<str>, R: AsRef<str>>(
    graph: &EnvGraph,
    trajectory: &[S],
    reference: &[R],
    threshold: f64,
) -> Result<f64, MetricError> {
    Ok(ndtw_from_dtw(
        dtw(graph, trajectory, reference)?,
        reference.len(),
        threshold,
    ))
}

/// Score a trajectory against a reference path.
pub fn evaluate_path<S: AsRef<str>, R: AsRef<str>>(
    graph: &EnvGraph,
    trajectory: &[S],
    reference: &[R],
    threshold: f64,
) -> Result<EvalResult, MetricError> {
    if trajectory.is_empty() {
        return Err(MetricError::EmptyTrajectory);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let t = graph.indices(trajectory)?;
    let r = graph.indices(reference)?;
    Ok(evaluate_idx(graph, &t, &r, threshold)?)
}

pub fn evaluate_idx(
    graph: &EnvGraph,
    trajectory: &[usize],
    reference: &[usize],
    threshold: f64,
) -> Result<EvalResult, GraphError> {
    let goal = *reference.last().expect("non-empty reference");
    let start = reference[0];
    let pl = graph.path_length_idx(trajectory)?;
    let ne = graph.dist_idx(*trajectory.last().expect("non-empty trajectory"), goal);
    let success = ne <= threshold;
    let oracle_success = trajectory
        .iter()
        .map(|&v| graph.dist_idx(v, goal))
        .fold(f64::INFINITY, f64::min)
        <= threshold;
    let shortest = graph.dist_idx(start, goal);
    let spl = if !success {
        0.0
    } else if pl == 0.0 && shortest == 0.0 {
        1.0
    } else {
        shortest / shortest.max(pl)
    };
    let ndtw = ndtw_from_dtw(dtw_idx(graph, trajectory, reference), reference.len(), threshold);
    Ok(EvalResult {
        pl,
        ne,
        oracle_success,
        success,
        spl,
        ndtw,
    })
}

/// Score a trajectory against an episode's ground-truth path.
pub fn evaluate_episode<S: AsRef<str>>(
    graph: &EnvGraph,
    trajectory: &[S],
    reference: &crate::dataset::Episode,
    threshold: f64,
) -> Result<EvalResult, MetricError> {
    evaluate_path(graph, trajectory, &reference.path, threshold)
}

/// Mean of every metric over a set of episodes; rates are fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub episodes: usize,
    pub pl: f64,
    pub ne: f64,
    pub osr: f64,
    pub sr: f64,
    pub spl: f64,
    pub ndtw: f64,
}

pub fn aggregate(results: &[EvalResult]) -> Option<Aggregate> {
    if results.is_empty() {
        return None;
    }
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&EvalResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Some(Aggregate {
        episodes: results.len(),
        pl: mean(&|r| r.pl),
        ne: mean(&|r| r.ne),
        osr: mean(&|r| r.oracle_success as u8 as f64),
        sr: mean(&|r| r.success as u8 as f64),
        spl: mean(&|r| r.spl),
        ndtw: mean(&|r| r.ndtw),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftConfusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ShiftConfusion {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        ShiftConfusion { tp, tn, fp, fn_ }
    }

    pub fn record(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(self, other: ShiftConfusion) -> ShiftConfusion {
        ShiftConfusion {
            tp: self.tp + other.tp,
            tn: self.tn + other.tn,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Derived rates; `None` marks a rate whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfusionRates {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl ConfusionRates {
    /// F1 with an undefined value read as zero, for ranking comparisons.
    pub fn f1_or_zero(&self) -> f64 {
        self.f1.unwrap_or(0.0)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_stats(c: &ShiftConfusion) -> ConfusionRates {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ConfusionRates {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::navgraph::Viewpoint;

    fn line(n: usize, step: f64) -> EnvGraph {
        let nodes = (0..n)
            .map(|i| Viewpoint {
                id: format!("{}", (b'A' + i as u8) as char),
                position: [i as f64 * step, 0.0, 0.0],
                label: None,
            })
            .collect::<Vec<_>>();
        let edges: Vec<(String, String)> = nodes
            .windows(2)
            .map(|w| (w[0].id.clone(), w[1].id.clone()))
            .collect();
        EnvGraph::new("line", nodes, &edges).unwrap()
    }

    #[test]
    fn dtw_skip_middle() {
        let g = line(3, 1.0);
        let d = dtw(&g, &["A", "C"], &["A", "B", "C"]).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let n = ndtw(&g, &["A", "C"], &["A", "B", "C"], 3.0).unwrap();
        assert!((n - (-1.0f64 / 9.0).exp()).abs() < 1e-12);
        assert!((n - 0.8948).abs() < 1e-4);
    }

    #[test]
    fn identity_alignment() {
        let g = line(4, 2.0);
        let path = ["A", "B", "C", "D"];
        assert_eq!(dtw(&g, &path, &path).unwrap(), 0.0);
        let r = evaluate_path(&g, &path, &path, SUCCESS_THRESHOLD).unwrap();
        assert_eq!(r.ne, 0.0);
        assert!(r.success && r.oracle_success);
        assert_eq!(r.ndtw, 1.0);
        assert!((r.spl - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standing_still_far_from_goal() {
        let g = line(3, 5.0);
        let r = evaluate_path(&g, &["A"], &["A", "B", "C"], 3.0).unwrap();
        assert_eq!(r.ne, 10.0);
        assert!(!r.success);
        assert_eq!(r.spl, 0.0);
        assert_eq!(r.pl, 0.0);
    }

    #[test]
    fn spl_formula() {
        let g = line(3, 5.0);
        let r = evaluate_path(&g, &["A", "B", "A", "B", "C"], &["A", "B", "C"], 3.0).unwrap();
        assert!((r.spl - 0.5).abs() < 1e-12);
        let nodes = vec![
            Viewpoint { id: "A".into(), position: [0.0, 0.0, 0.0], label: None },
            Viewpoint { id: "B".into(), position: [10.0, 0.0, 0.0], label: None },
            Viewpoint { id: "M".into(), position: [5.0, (11.0f64).sqrt(), 0.0], label: None },
        ];
        let g2 = EnvGraph::new(
            "s",
            nodes,
            &[("A".into(), "B".into()), ("A".into(), "M".into()), ("M".into(), "B".into())],
        )
        .unwrap();
        let r = evaluate_path(&g2, &["A", "M", "B"], &["A", "B"], 3.0).unwrap();
        assert!((r.pl - 12.0).abs() < 1e-12);
        assert!((r.spl - 10.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_success() {
        let g = line(2, 1.0);
        let r = evaluate_path(&g, &["A"], &["A"], 3.0).unwrap();
        assert_eq!(r.spl, 1.0);
    }

    #[test]
    fn oracle_without_success() {
        let g = line(3, 4.0);
        let r = evaluate_path(&g, &["A", "B", "C", "B", "A"], &["A", "B", "C"], 3.0).unwrap();
        assert!(r.oracle_success);
        assert!(!r.success);
    }

    #[test]
    fn errors() {
        let g = line(2, 1.0);
        let empty: [&str; 0] = [];
        assert_eq!(
            evaluate_path(&g, &empty, &["A"], 3.0),
            Err(MetricError::EmptyTrajectory)
        );
        assert!(matches!(
            evaluate_path(&g, &["Q"], &["A"], 3.0),
            Err(MetricError::Graph(GraphError::UnknownViewpoint(_)))
        ));
    }

    #[test]
    fn confusion_rows() {
        let r = confusion_stats(&ShiftConfusion::new(608, 36344, 1602, 4796));
        assert!((r.accuracy.unwrap() - 0.852).abs() < 1e-3);
        assert!((r.precision.unwrap() - 0.275).abs() < 1e-3);
        assert!((r.recall.unwrap() - 0.113).abs() < 1e-3);
        assert!((r.f1.unwrap() - 0.160).abs() < 1e-3);
    }

    #[test]
    fn degenerate_confusion() {
        let r = confusion_stats(&ShiftConfusion::new(0, 10, 0, 0));
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, None);
        assert_eq!(r.f1, None);
        assert_eq!(r.f1_or_zero(), 0.0);
        let mut c = ShiftConfusion::default();
        c.record(true, false);
        c.record(false, true);
        c.record(true, true);
        assert_eq!(c, ShiftConfusion::new(1, 0, 1, 1));
        assert_eq!(c.merge(c).total(), 6);
    }
}
