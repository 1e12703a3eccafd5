use serde::Serialize;

use super::{smoothed_bleu4, AnalysisError};
use crate::Scalar;

/// Symmetric pairwise similarity in [0, 1] with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix<T> {
    n: usize,
    values: Vec<T>,
    /// Text of each item, by index.
    pub items: Vec<String>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    /// Build from a full table; entries are symmetrized and the diagonal set to 1.
    pub fn from_fn<F: Fn(usize, usize) -> T>(items: Vec<String>, f: F) -> Self {
        let n = items.len();
        let mut values = vec![T::zero(); n * n];
        let half = T::of(0.5);
        for i in 0..n {
            values[i * n + i] = T::one();
            for j in i + 1..n {
                let v = (f(i, j) + f(j, i)) * half;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        SimilarityMatrix { n, values, items }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    pub fn dissimilarity(&self, i: usize, j: usize) -> T {
        T::one() - self.get(i, j)
    }
}

/// Pairwise symmetrized smoothed BLEU-4; rows are computed in parallel.
pub fn similarity_matrix<T: Scalar, S: AsRef<str> + Sync>(
    sub_instructions: &[Vec<S>],
) -> SimilarityMatrix<T> {
    let n = sub_instructions.len();
    let mut raw = vec![0.0f64; n * n];
    let threads = std::thread::available_parallelism()
        .map(|t| t.get())
        .unwrap_or(1)
        .min(n.max(1));
    let rows_per = n.div_ceil(threads.max(1)).max(1);
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in raw.chunks_mut(rows_per * n.max(1)).enumerate() {
            scope.spawn(move || {
                for (r, row) in chunk.chunks_mut(n).enumerate() {
                    let i = chunk_idx * rows_per + r;
                    for (j, v) in row.iter_mut().enumerate() {
                        if i != j {
                            *v = smoothed_bleu4(&sub_instructions[i], &sub_instructions[j]);
                        }
                    }
                }
            });
        }
    });
    let items = sub_instructions
        .iter()
        .map(|w| w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" "))
        .collect();
    SimilarityMatrix::from_fn(items, |i, j| T::of(raw[i * n + j]))
}

/// Cluster label per item. Labels are dense, numbered by each cluster's
/// smallest member index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Members of each cluster, ascending, in label order.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn from_clusters(n: usize, mut clusters: Vec<Vec<usize>>) -> Self {
        clusters.retain(|c| !c.is_empty());
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        let mut labels = vec![0; n];
        for (l, c) in clusters.iter().enumerate() {
            for &i in c {
                labels[i] = l;
            }
        }
        ClusterAssignment {
            labels,
            k: clusters.len(),
        }
    }
}

/// Agglomerate with complete linkage until `k` clusters remain.
///
/// Each cluster is identified by its smallest member index. Every round
/// merges the pair with the smallest linkage dissimilarity, ties broken by the
/// smaller first identifier and then the smaller second identifier.
pub fn complete_linkage_cluster<T: Scalar>(
    matrix: &SimilarityMatrix<T>,
    k: usize,
) -> Result<ClusterAssignment, AnalysisError> {
    let n = matrix.len();
    if k == 0 || k > n {
        return Err(AnalysisError::ClusterCount { k, n });
    }
    let mut dist: Vec<T> = (0..n * n)
        .map(|x| matrix.dissimilarity(x / n, x % n))
        .collect();
    let mut active = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // nearest later neighbour of each active row: (distance, column)
    let nearest = |dist: &[T], active: &[bool], i: usize| -> Option<(T, usize)> {
        let mut best: Option<(T, usize)> = None;
        for j in i + 1..n {
            if active[j] && best.is_none_or(|(d, _)| dist[i * n + j] < d) {
                best = Some((dist[i * n + j], j));
            }
        }
        best
    };
    let mut nn: Vec<Option<(T, usize)>> = (0..n).map(|i| nearest(&dist, &active, i)).collect();

    for _ in 0..n - k {
        let mut pick: Option<(T, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((d, j)) = nn[i] {
                if pick.is_none_or(|(pd, _, _)| d < pd) {
                    pick = Some((d, i, j));
                }
            }
        }
        let (_, a, b) = pick.expect("at least two active clusters");
        active[b] = false;
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        for c in 0..n {
            if active[c] && c != a {
                let d = dist[a * n + c].max(dist[b * n + c]);
                dist[a * n + c] = d;
                dist[c * n + a] = d;
            }
        }
        for i in 0..n {
            if !active[i] {
                nn[i] = None;
                continue;
            }
            let stale = i == a || matches!(nn[i], Some((_, j)) if j == a || j == b);
            if stale {
                nn[i] = nearest(&dist, &active, i);
            }
        }
    }
    let clusters = members
        .into_iter()
        .zip(&active)
        .filter(|(_, &on)| on)
        .map(|(m, _)| m)
        .collect();
    Ok(ClusterAssignment::from_clusters(n, clusters))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks() -> SimilarityMatrix<f64> {
        let items = (0..6).map(|i| format!("s{i}")).collect();
        SimilarityMatrix::from_fn(items, |i, j| {
            if (i < 3) == (j < 3) {
                0.9
            } else {
                0.05
            }
        })
    }

    #[test]
    fn extreme_k() {
        let m = blocks();
        let all = complete_linkage_cluster(&m, 6).unwrap();
        assert_eq!(all.labels, vec![0, 1, 2, 3, 4, 5]);
        let one = complete_linkage_cluster(&m, 1).unwrap();
        assert_eq!(one.labels, vec![0; 6]);
        assert!(complete_linkage_cluster(&m, 7).is_err());
    }

    #[test]
    fn two_blocks() {
        let a = complete_linkage_cluster(&blocks(), 2).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn symmetric_matrix() {
        let s: Vec<Vec<&str>> = vec![
            vec!["go", "up", "the", "stairs"],
            vec!["go", "up", "the", "stairs", "now"],
            vec!["turn", "left"],
            vec!["go", "up", "the", "stairs"],
        ];
        let m: SimilarityMatrix<f64> = similarity_matrix(&s);
        for i in 0..4 {
            assert_eq!(m.get(i, i), 1.0);
            for j in 0..4 {
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&m.get(i, j)));
            }
        }
        assert_eq!(m.get(0, 3), 1.0);
        assert!(m.get(0, 1) < 1.0);
        assert_eq!(m.items[2], "turn left");
    }

    #[test]
    fn single_precision_matrix() {
        let s = vec![vec!["a", "b"], vec!["a", "b"]];
        let m: SimilarityMatrix<f32> = similarity_matrix(&s);
        assert_eq!(m.get(0, 1), 1.0f32);
    }
}
