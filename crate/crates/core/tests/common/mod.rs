//! Brute-force oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use rand::Rng;
use subnav::analysis::{ClusterAssignment, SimilarityMatrix};
use subnav::conllu::{ParsedInstruction, Token};
use subnav::navgraph::{EnvGraph, Viewpoint};
use subnav::rng::SeededRng;

/// Random graph on `n` viewpoints in a 6 m square. Each pair is joined with
/// probability `p`; with `connected` a random spanning tree is added first.
pub fn random_graph(rng: &mut SeededRng, n: usize, p: f64, connected: bool) -> EnvGraph {
    let nodes: Vec<Viewpoint> = (0..n)
        .map(|i| Viewpoint {
            id: format!("n{i}"),
            position: [
                rng.gen_range(0.0..6.0),
                rng.gen_range(0.0..6.0),
                rng.gen_range(-0.5..0.5),
            ],
            label: None,
        })
        .collect();
    let mut edges = Vec::new();
    if connected {
        for i in 1..n {
            let j = rng.gen_range(0..i);
            edges.push((format!("n{j}"), format!("n{i}")));
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.push((format!("n{i}"), format!("n{j}")));
            }
        }
    }
    EnvGraph::new("rand", nodes, &edges).expect("random graph is valid")
}

/// Walk of `len` viewpoints along edges; may revisit.
pub fn random_walk(rng: &mut SeededRng, graph: &EnvGraph, start: usize, len: usize) -> Vec<usize> {
    let mut walk = vec![start];
    while walk.len() < len {
        let cur = *walk.last().unwrap();
        let nb = graph.neighbors(cur);
        if nb.is_empty() {
            break;
        }
        walk.push(nb[rng.gen_range(0..nb.len())].0);
    }
    walk
}

/// Minimum length over all simple paths, by exhaustive search.
pub fn brute_shortest(graph: &EnvGraph, a: usize, b: usize) -> f64 {
    fn go(g: &EnvGraph, cur: usize, b: usize, seen: &mut Vec<bool>, len: f64, best: &mut f64) {
        if cur == b {
            *best = best.min(len);
            return;
        }
        for &(j, w) in g.neighbors(cur) {
            if !seen[j] {
                seen[j] = true;
                go(g, j, b, seen, len + w, best);
                seen[j] = false;
            }
        }
    }
    let mut seen = vec![false; graph.len()];
    seen[a] = true;
    let mut best = f64::INFINITY;
    go(graph, a, b, &mut seen, 0.0, &mut best);
    best
}

/// Minimum cost over every monotone alignment covering both sequences.
pub fn brute_dtw(graph: &EnvGraph, t: &[usize], r: &[usize]) -> f64 {
    fn go(g: &EnvGraph, t: &[usize], r: &[usize], i: usize, j: usize) -> f64 {
        let here = brute_shortest(g, t[i], r[j]);
        if i + 1 == t.len() && j + 1 == r.len() {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < t.len() {
            best = best.min(go(g, t, r, i + 1, j));
        }
        if j + 1 < r.len() {
            best = best.min(go(g, t, r, i, j + 1));
        }
        if i + 1 < t.len() && j + 1 < r.len() {
            best = best.min(go(g, t, r, i + 1, j + 1));
        }
        here + best
    }
    go(graph, t, r, 0, 0)
}

const RELATIONS: &[&str] = &["conj", "parataxis", "punct", "obl", "det", "cc", "advmod", "obj"];
const WORDS: &[&str] = &["go", "turn", "the", "left", "stairs", "and", "then", "door", "stop", "wait"];

/// Random parse of at most `max_tokens` tokens over a small relation alphabet.
pub fn random_parse(rng: &mut SeededRng, max_tokens: usize) -> ParsedInstruction {
    let mut sentences = Vec::new();
    let mut left = max_tokens;
    while left > 0 && (sentences.is_empty() || rng.gen_bool(0.5)) {
        let len = rng.gen_range(1..=left.min(6));
        left -= len;
        let root = rng.gen_range(1..=len);
        let sentence: Vec<Token> = (1..=len)
            .map(|i| {
                let form = WORDS[rng.gen_range(0..WORDS.len())];
                if i == root {
                    Token::new(i, form, "VERB", 0, "root")
                } else {
                    let mut head = rng.gen_range(1..=len);
                    if head == i {
                        head = root;
                    }
                    let rel = RELATIONS[rng.gen_range(0..RELATIONS.len())];
                    Token::new(i, form, "X", head, rel)
                }
            })
            .collect();
        sentences.push(sentence);
    }
    ParsedInstruction::from_sentences(None, sentences)
}

/// Boundary positions obtained by replaying the three boundary conditions
/// from the start of the instruction for every candidate token.
pub fn oracle_boundaries(p: &ParsedInstruction) -> Vec<usize> {
    let flat: Vec<_> = p.tokens().collect();
    let rel = |i: usize| flat[i].1.relation().to_string();
    let governor = |i: usize| flat[i].0.governor;
    let conj_words: Vec<usize> = (0..flat.len())
        .filter(|&i| rel(i) == "conj")
        .filter(|&i| governor(i).is_some_and(|g| p.token(g).relation() == "root"))
        .map(|i| flat[i].0.global)
        .collect();
    let mut out = Vec::new();
    for j in 0..flat.len() {
        // replay the prefix to find where the current chunk started and how
        // many conj words were already consumed
        let mut start = 0;
        let mut consumed = 0;
        let mut fired = false;
        for i in 0..=j {
            let open = (start..i).any(|h| {
                let r = rel(h);
                r != "punct" && (r == "root" || r == "parataxis")
            });
            let c1 = rel(i) == "root" && open;
            let c2 = !c1 && conj_words.get(consumed).is_some_and(|&c| governor(i) == Some(c));
            let c3 = !c1 && !c2 && rel(i) == "parataxis" && open;
            if c2 {
                consumed += 1;
            }
            if c1 || c2 || c3 {
                start = i;
                if i == j {
                    fired = true;
                }
            }
        }
        if fired {
            out.push(flat[j].0.global);
        }
    }
    out
}

pub fn random_matrix(rng: &mut SeededRng, n: usize) -> SimilarityMatrix<f64> {
    let raw: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0.0..1.0)).collect();
    SimilarityMatrix::from_fn((0..n).map(|i| format!("s{i}")).collect(), |i, j| raw[i * n + j])
}

/// Random instance with a planted k-block structure: within-block similarity
/// in [0.6, 1), across blocks in [0, 0.4).
pub fn planted_matrix(rng: &mut SeededRng, n: usize, k: usize) -> SimilarityMatrix<f64> {
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let raw: Vec<f64> = (0..n * n)
        .map(|x| {
            if labels[x / n] == labels[x % n] {
                rng.gen_range(0.6..1.0)
            } else {
                rng.gen_range(0.0..0.4)
            }
        })
        .collect();
    SimilarityMatrix::from_fn((0..n).map(|i| i.to_string()).collect(), |i, j| raw[i * n + j])
}

/// Greedy agglomeration recomputing every cluster pair from scratch.
pub fn greedy_oracle(m: &SimilarityMatrix<f64>, k: usize) -> ClusterAssignment {
    let mut clusters: Vec<Vec<usize>> = (0..m.len()).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in 0..clusters.len() {
                let (ia, ib) = (clusters[a][0], clusters[b][0]);
                if ia >= ib {
                    continue;
                }
                let mut link = f64::NEG_INFINITY;
                for &x in &clusters[a] {
                    for &y in &clusters[b] {
                        link = link.max(m.dissimilarity(x, y));
                    }
                }
                let better = match best {
                    None => true,
                    Some((d, i, j, _, _)) => (link, ia, ib) < (d, i, j),
                };
                if better {
                    best = Some((link, ia, ib, a, b));
                }
            }
        }
        let (_, _, _, a, b) = best.unwrap();
        let moved = clusters.remove(b.max(a));
        let keep = a.min(b);
        clusters[keep].extend(moved);
        clusters[keep].sort_unstable();
        clusters.sort_by_key(|c| c[0]);
    }
    ClusterAssignment::from_clusters(m.len(), clusters)
}

/// Every partition of `0..n` into exactly `k` blocks, as restricted growth strings.
pub fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, k: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        for l in 0..=used.min(k - 1) {
            cur.push(l);
            go(i + 1, n, k, used.max(l + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Largest within-cluster dissimilarity.
pub fn diameter(m: &SimilarityMatrix<f64>, labels: &[usize]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                d = d.max(m.dissimilarity(i, j));
            }
        }
    }
    d
}

/// Partition with the smallest largest-cluster diameter, first in
/// enumeration order on ties.
pub fn min_diameter_partition(m: &SimilarityMatrix<f64>, k: usize) -> ClusterAssignment {
    let best = partitions(m.len(), k)
        .into_iter()
        .min_by(|a, b| diameter(m, a).total_cmp(&diameter(m, b)))
        .unwrap();
    let mut groups = vec![Vec::new(); k];
    for (i, &l) in best.iter().enumerate() {
        groups[l].push(i);
    }
    ClusterAssignment::from_clusters(m.len(), groups)
}
