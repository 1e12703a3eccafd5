//! Episodes pairing sub-instructions with sub-paths.
//!
//! Sub-path indices are 0-based and inclusive. Consecutive sub-paths share a
//! boundary viewpoint, the first starts at the path start and the last ends at
//! the goal. Released annotations with 1-based pairs are shifted by the
//! adapter.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::chunker::{chunk_instruction, ChunkError, ChunkingConfig, SubInstruction};
use crate::conllu::ParsedInstruction;
use crate::navgraph::{EnvGraph, GraphError};

/// Distance (meters) within which the agent counts as having reached a sub-path end.
pub const SHIFT_RADIUS: f64 = 0.5;
/// Maximum gap (meters) between two paths joined into a long episode.
pub const R4R_JOIN_RADIUS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("episode {path_id}: {rule}")]
    Validation { path_id: String, rule: String },
    #[error("episode {path_id}: {source}")]
    Graph {
        path_id: String,
        #[source]
        source: GraphError,
    },
    #[error("not concatenable: {0}")]
    NotConcatenable(String),
    #[error("format: {0}")]
    Format(String),
    #[error("chunking {path_id}: {source}")]
    Chunk {
        path_id: String,
        #[source]
        source: ChunkError,
    },
}

fn invalid(path_id: &str, rule: impl Into<String>) -> DatasetError {
    DatasetError::Validation {
        path_id: path_id.to_string(),
        rule: rule.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubPath {
    pub start_idx: usize,
    pub end_idx: usize,
}

impl SubPath {
    pub fn new(start_idx: usize, end_idx: usize) -> Self {
        SubPath { start_idx, end_idx }
    }

    pub fn viewpoints(&self) -> usize {
        self.end_idx - self.start_idx + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub path_id: String,
    pub scan: String,
    pub path: Vec<String>,
    pub instruction: String,
    pub sub_instructions: Vec<SubInstruction>,
    pub sub_paths: Vec<SubPath>,
    pub heading: f64,
}

impl Episode {
    /// Build from word lists; spans become consecutive word positions.
    pub fn from_words(
        path_id: impl Into<String>,
        scan: impl Into<String>,
        path: Vec<String>,
        sub_words: Vec<Vec<String>>,
        sub_paths: Vec<SubPath>,
        heading: f64,
    ) -> Self {
        let instruction = sub_words
            .iter()
            .map(|w| w.join(" "))
            .collect::<Vec<_>>()
            .join(" ");
        Episode {
            path_id: path_id.into(),
            scan: scan.into(),
            path,
            instruction,
            sub_instructions: words_to_sub_instructions(sub_words),
            sub_paths,
            heading,
        }
    }

    pub fn goal(&self) -> &str {
        self.path.last().map(String::as_str).unwrap_or("")
    }

    /// Check the alignment invariants.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let id = &self.path_id;
        if self.path.is_empty() {
            return Err(invalid(id, "empty path"));
        }
        if self.sub_instructions.is_empty() {
            return Err(invalid(id, "no sub-instructions"));
        }
        if self.sub_paths.len() != self.sub_instructions.len() {
            return Err(invalid(
                id,
                format!(
                    "{} sub-paths for {} sub-instructions",
                    self.sub_paths.len(),
                    self.sub_instructions.len()
                ),
            ));
        }
        if let Some((i, _)) = self
            .sub_instructions
            .iter()
            .enumerate()
            .find(|(_, s)| s.words.is_empty())
        {
            return Err(invalid(id, format!("empty sub-instruction {i}")));
        }
        for (i, sp) in self.sub_paths.iter().enumerate() {
            if sp.start_idx > sp.end_idx || sp.end_idx >= self.path.len() {
                return Err(invalid(
                    id,
                    format!("sub-path {i} ({}, {}) out of range", sp.start_idx, sp.end_idx),
                ));
            }
        }
        if self.sub_paths[0].start_idx != 0 {
            return Err(invalid(id, "first sub-path does not start at the path start"));
        }
        for i in 1..self.sub_paths.len() {
            if self.sub_paths[i].start_idx != self.sub_paths[i - 1].end_idx {
                return Err(invalid(id, format!("boundary mismatch at sub-path {i}")));
            }
        }
        if self.sub_paths.last().map(|s| s.end_idx) != Some(self.path.len() - 1) {
            return Err(invalid(id, "path not covered"));
        }
        Ok(())
    }

    /// Validate the episode against a graph: known viewpoints, adjacent steps.
    pub fn validate_in(&self, graph: &EnvGraph) -> Result<(), DatasetError> {
        self.validate()?;
        let wrap = |source| DatasetError::Graph {
            path_id: self.path_id.clone(),
            source,
        };
        let idx = graph.indices(&self.path).map_err(wrap)?;
        for w in idx.windows(2) {
            if graph.edge_weight(w[0], w[1]).is_none() {
                return Err(wrap(GraphError::NotAdjacent(
                    graph.id(w[0]).to_string(),
                    graph.id(w[1]).to_string(),
                )));
            }
        }
        Ok(())
    }

    pub fn to_record(&self) -> EpisodeRecord {
        EpisodeRecord {
            path_id: self.path_id.clone(),
            scan: self.scan.clone(),
            heading: self.heading,
            path: self.path.clone(),
            instruction: self.instruction.clone(),
            sub_instructions: self.sub_instructions.iter().map(|s| s.words.clone()).collect(),
            sub_paths: Some(
                self.sub_paths
                    .iter()
                    .map(|s| [s.start_idx, s.end_idx])
                    .collect(),
            ),
        }
    }
}

fn words_to_sub_instructions(sub_words: Vec<Vec<String>>) -> Vec<SubInstruction> {
    let mut pos = 0;
    sub_words
        .into_iter()
        .enumerate()
        .map(|(i, words)| {
            let span = (pos + 1..=pos + words.len()).collect();
            pos += words.len();
            SubInstruction {
                id: i + 1,
                words,
                span,
            }
        })
        .collect()
}

/// Canonical on-disk episode. `sub_paths` is absent for chunk-only records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub path_id: String,
    #[serde(default)]
    pub scan: String,
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub path: Vec<String>,
    #[serde(default)]
    pub instruction: String,
    pub sub_instructions: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_paths: Option<Vec<[usize; 2]>>,
}

impl EpisodeRecord {
    pub fn into_episode(self) -> Result<Episode, DatasetError> {
        let sub_paths = self
            .sub_paths
            .ok_or_else(|| invalid(&self.path_id, "missing sub_paths"))?
            .into_iter()
            .map(|[s, e]| SubPath::new(s, e))
            .collect();
        let instruction = self.instruction;
        let mut ep = Episode::from_words(
            self.path_id,
            self.scan,
            self.path,
            self.sub_instructions,
            sub_paths,
            self.heading,
        );
        if !instruction.is_empty() {
            ep.instruction = instruction;
        }
        ep.validate()?;
        Ok(ep)
    }
}

fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => Ok(s),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        other => Err(serde::de::Error::custom(format!(
            "expected string or number id, got {other}"
        ))),
    }
}

/// Parse and validate a canonical episode file.
pub fn load_episodes(text: &str) -> Result<Vec<Episode>, DatasetError> {
    let records: Vec<EpisodeRecord> =
        serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
    records.into_iter().map(EpisodeRecord::into_episode).collect()
}

/// Parse a canonical episode file, collecting every violation instead of
/// stopping at the first.
pub fn validate_episode_file(text: &str) -> Result<Vec<DatasetError>, DatasetError> {
    let records: Vec<EpisodeRecord> =
        serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
    Ok(records
        .into_iter()
        .filter_map(|r| r.into_episode().err())
        .collect())
}

pub fn episodes_to_json(episodes: &[Episode]) -> String {
    let recs: Vec<EpisodeRecord> = episodes.iter().map(Episode::to_record).collect();
    serde_json::to_string_pretty(&recs).expect("episodes serialize")
}

/// Field names of the released fine-grained annotation files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fgr2rFields {
    pub path_id: String,
    pub scan: String,
    pub heading: String,
    pub path: String,
    pub instructions: String,
    pub chunks: String,
    pub chunk_view: String,
    /// Index base of the released sub-path pairs.
    pub index_base: usize,
}

impl Default for Fgr2rFields {
    fn default() -> Self {
        Fgr2rFields {
            path_id: "path_id".into(),
            scan: "scan".into(),
            heading: "heading".into(),
            path: "path".into(),
            instructions: "instructions".into(),
            chunks: "new_instructions".into(),
            chunk_view: "chunk_view".into(),
            index_base: 1,
        }
    }
}

/// Load released fine-grained annotations: each instruction variant of a
/// path becomes its own episode with id `<path_id>_<k>`. Invalid episodes are
/// returned separately rather than failing the whole file.
pub fn load_fgr2r_lenient(
    text: &str,
    fields: &Fgr2rFields,
) -> Result<(Vec<Episode>, Vec<DatasetError>), DatasetError> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
    let items = root
        .as_array()
        .ok_or_else(|| DatasetError::Format("expected a list of path records".into()))?;
    let mut episodes = Vec::new();
    let mut rejected = Vec::new();
    for item in items {
        let get = |k: &str| {
            item.get(k)
                .ok_or_else(|| DatasetError::Format(format!("record missing field `{k}`")))
        };
        let path_id = match get(&fields.path_id)? {
            serde_json::Value::String(s) => s.clone(),
            v => v.to_string(),
        };
        let scan = get(&fields.scan)?.as_str().unwrap_or_default().to_string();
        let heading = item
            .get(&fields.heading)
            .and_then(|v| v.as_f64())
            .unwrap_or(0.0);
        let path: Vec<String> = serde_json::from_value(get(&fields.path)?.clone())
            .map_err(|e| DatasetError::Format(format!("path of {path_id}: {e}")))?;
        let instructions: Vec<String> =
            serde_json::from_value(get(&fields.instructions)?.clone()).unwrap_or_default();
        let chunks: Vec<Vec<Vec<String>>> = match get(&fields.chunks)? {
            serde_json::Value::String(s) => parse_word_lists(s)
                .map_err(|e| DatasetError::Format(format!("chunks of {path_id}: {e}")))?,
            v => serde_json::from_value(v.clone())
                .map_err(|e| DatasetError::Format(format!("chunks of {path_id}: {e}")))?,
        };
        let views: Vec<Vec<[i64; 2]>> = serde_json::from_value(get(&fields.chunk_view)?.clone())
            .map_err(|e| DatasetError::Format(format!("chunk_view of {path_id}: {e}")))?;
        for (k, (words, view)) in chunks.into_iter().zip(views).enumerate() {
            let id = format!("{path_id}_{k}");
            let base = fields.index_base as i64;
            if view.iter().flatten().any(|&v| v < base) {
                rejected.push(invalid(&id, "sub-path index below index base"));
                continue;
            }
            let sub_paths = view
                .iter()
                .map(|&[s, e]| SubPath::new((s - base) as usize, (e - base) as usize))
                .collect();
            let mut ep =
                Episode::from_words(id, scan.clone(), path.clone(), words, sub_paths, heading);
            if let Some(raw) = instructions.get(k) {
                ep.instruction = raw.clone();
            }
            match ep.validate() {
                Ok(()) => episodes.push(ep),
                Err(e) => rejected.push(e),
            }
        }
    }
    Ok((episodes, rejected))
}

/// Strict variant of [`load_fgr2r_lenient`]: any invalid episode is an error.
pub fn load_fgr2r(text: &str, fields: &Fgr2rFields) -> Result<Vec<Episode>, DatasetError> {
    let (episodes, mut rejected) = load_fgr2r_lenient(text, fields)?;
    match rejected.is_empty() {
        true => Ok(episodes),
        false => Err(rejected.remove(0)),
    }
}

/// Chunk plain path records (no sub-annotations) using per-instruction parses
/// whose `text_id` is `<path_id>_<k>`. Records without a parse are skipped.
pub fn chunk_r2r(
    text: &str,
    parses: &[ParsedInstruction],
    config: &ChunkingConfig,
) -> Result<Vec<EpisodeRecord>, DatasetError> {
    #[derive(Deserialize)]
    struct R2r {
        #[serde(deserialize_with = "string_or_number")]
        path_id: String,
        scan: String,
        #[serde(default)]
        heading: f64,
        path: Vec<String>,
        instructions: Vec<String>,
    }
    let recs: Vec<R2r> =
        serde_json::from_str(text).map_err(|e| DatasetError::Format(e.to_string()))?;
    let by_id: BTreeMap<&str, &ParsedInstruction> = parses
        .iter()
        .filter_map(|p| p.text_id.as_deref().map(|id| (id, p)))
        .collect();
    let mut out = Vec::new();
    for r in recs {
        for (k, instr) in r.instructions.iter().enumerate() {
            let id = format!("{}_{k}", r.path_id);
            let Some(parsed) = by_id.get(id.as_str()) else {
                log::warn!("no parse for instruction {id}");
                continue;
            };
            let subs = chunk_instruction(parsed, config).map_err(|source| DatasetError::Chunk {
                path_id: id.clone(),
                source,
            })?;
            out.push(EpisodeRecord {
                path_id: id,
                scan: r.scan.clone(),
                heading: r.heading,
                path: r.path.clone(),
                instruction: instr.clone(),
                sub_instructions: subs.into_iter().map(|s| s.words).collect(),
                sub_paths: None,
            });
        }
    }
    Ok(out)
}

/// Parse a Python-literal nested list of strings, e.g. `[['go', 'up'], ["don't"]]`.
pub fn parse_word_lists(text: &str) -> Result<Vec<Vec<Vec<String>>>, String> {
    #[derive(Debug)]
    enum Node {
        List(Vec<Node>),
        Str(String),
    }
    fn skip_ws(chars: &[char], i: &mut usize) {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    }
    fn parse(chars: &[char], i: &mut usize) -> Result<Node, String> {
        skip_ws(chars, i);
        match chars.get(*i) {
            Some('[') => {
                *i += 1;
                let mut items = Vec::new();
                loop {
                    skip_ws(chars, i);
                    if chars.get(*i) == Some(&']') {
                        *i += 1;
                        return Ok(Node::List(items));
                    }
                    items.push(parse(chars, i)?);
                    skip_ws(chars, i);
                    match chars.get(*i) {
                        Some(',') => *i += 1,
                        Some(']') => {}
                        other => return Err(format!("unexpected {other:?} at {}", *i)),
                    }
                }
            }
            Some(&q) if q == '\'' || q == '"' => {
                *i += 1;
                let mut s = String::new();
                while let Some(&c) = chars.get(*i) {
                    *i += 1;
                    match c {
                        '\\' => {
                            let esc = chars.get(*i).copied().ok_or("dangling escape")?;
                            *i += 1;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        c if c == q => return Ok(Node::Str(s)),
                        c => s.push(c),
                    }
                }
                Err("unterminated string".into())
            }
            other => Err(format!("unexpected {other:?} at {}", *i)),
        }
    }
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let root = parse(&chars, &mut i)?;
    let as_list = |n: Node| match n {
        Node::List(v) => Ok(v),
        Node::Str(_) => Err("expected list".to_string()),
    };
    let mut out = Vec::new();
    for instr in as_list(root)? {
        let mut subs = Vec::new();
        for sub in as_list(instr)? {
            let words = as_list(sub)?
                .into_iter()
                .map(|w| match w {
                    Node::Str(s) => Ok(s),
                    Node::List(_) => Err("expected word".to_string()),
                })
                .collect::<Result<Vec<_>, _>>()?;
            subs.push(words);
        }
        out.push(subs);
    }
    Ok(out)
}

/// Ground-truth shift signal: the agent is within [`SHIFT_RADIUS`] of the
/// end viewpoint of sub-path `sub_idx`.
pub fn gt_shift_signal(
    graph: &EnvGraph,
    episode: &Episode,
    agent_vp: &str,
    sub_idx: usize,
) -> Result<bool, DatasetError> {
    let sp = episode.sub_paths.get(sub_idx).ok_or_else(|| {
        invalid(
            &episode.path_id,
            format!("sub-instruction index {sub_idx} out of range"),
        )
    })?;
    let end = &episode.path[sp.end_idx];
    let d = graph
        .shortest_dist(agent_vp, end)
        .map_err(|source| DatasetError::Graph {
            path_id: episode.path_id.clone(),
            source,
        })?;
    Ok(d.meters() <= SHIFT_RADIUS)
}

/// Fold sub-instructions paired with a single viewpoint into the next one
/// (or the previous one when last), left to right until none remain.
pub fn normalize_for_training(episode: &Episode) -> Episode {
    let mut words: Vec<Vec<String>> = episode
        .sub_instructions
        .iter()
        .map(|s| s.words.clone())
        .collect();
    let mut spans: Vec<Vec<usize>> = episode
        .sub_instructions
        .iter()
        .map(|s| s.span.clone())
        .collect();
    let mut paths = episode.sub_paths.clone();
    if paths.len() == 1 && paths[0].viewpoints() == 1 {
        log::warn!(
            "episode {}: single sub-instruction spans one viewpoint, left unchanged",
            episode.path_id
        );
    }
    while paths.len() > 1 {
        let Some(i) = paths.iter().position(|p| p.viewpoints() == 1) else {
            break;
        };
        if i + 1 < paths.len() {
            let w = words.remove(i);
            let s = spans.remove(i);
            let p = paths.remove(i);
            words[i].splice(0..0, w);
            spans[i].splice(0..0, s);
            paths[i].start_idx = p.start_idx;
        } else {
            let w = words.remove(i);
            let s = spans.remove(i);
            let p = paths.remove(i);
            words[i - 1].extend(w);
            spans[i - 1].extend(s);
            paths[i - 1].end_idx = p.end_idx;
        }
    }
    Episode {
        sub_instructions: words
            .into_iter()
            .zip(spans)
            .enumerate()
            .map(|(i, (words, span))| SubInstruction {
                id: i + 1,
                words,
                span,
            })
            .collect(),
        sub_paths: paths,
        ..episode.clone()
    }
}

/// Join two episodes into one long episode. Viewpoints connecting the end of
/// `first` to the start of `second` are absorbed into the first sub-path of
/// `second`.
pub fn concat_to_r4r(
    first: &Episode,
    second: &Episode,
    graph: &EnvGraph,
) -> Result<Episode, DatasetError> {
    if first.scan != second.scan {
        return Err(DatasetError::NotConcatenable(format!(
            "scans differ ({} vs {})",
            first.scan, second.scan
        )));
    }
    let wrap = |source| DatasetError::Graph {
        path_id: format!("{}+{}", first.path_id, second.path_id),
        source,
    };
    let a = graph.idx(first.goal()).map_err(wrap)?;
    let b = graph.idx(&second.path[0]).map_err(wrap)?;
    let gap = graph.dist_idx(a, b);
    if !gap.is_finite() {
        return Err(DatasetError::NotConcatenable(format!(
            "{} is unreachable from {}",
            second.path[0],
            first.goal()
        )));
    }
    if gap > R4R_JOIN_RADIUS {
        return Err(DatasetError::NotConcatenable(format!(
            "endpoints are {gap:.2} m apart (limit {R4R_JOIN_RADIUS} m)"
        )));
    }
    let connector = graph.shortest_path(a, b).expect("reachable pair has a path");

    let mut path = first.path.clone();
    path.extend(connector[1..].iter().map(|&i| graph.id(i).to_string()));
    let join = first.path.len() - 1;
    let offset = join + connector.len() - 1;
    path.extend(second.path[1..].iter().cloned());

    let mut sub_paths = first.sub_paths.clone();
    for (i, sp) in second.sub_paths.iter().enumerate() {
        let start = if i == 0 { join } else { sp.start_idx + offset };
        sub_paths.push(SubPath::new(start, sp.end_idx + offset));
    }
    let sub_words = first
        .sub_instructions
        .iter()
        .chain(&second.sub_instructions)
        .map(|s| s.words.clone())
        .collect();
    let mut ep = Episode::from_words(
        format!("{}+{}", first.path_id, second.path_id),
        first.scan.clone(),
        path,
        sub_words,
        sub_paths,
        first.heading,
    );
    ep.instruction = format!("{} {}", first.instruction, second.instruction);
    ep.validate()?;
    Ok(ep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub episodes: usize,
    pub sub_instructions: usize,
    pub mean_subinstr_per_instr: f64,
    pub mean_words_per_subinstr: f64,
    pub mean_viewpoints_per_subinstr: f64,
    pub min_viewpoints: usize,
    pub max_viewpoints: usize,
    pub min_subinstr_per_instr: usize,
    pub max_subinstr_per_instr: usize,
    /// Sub-instruction count per instruction -> number of instructions.
    pub subinstr_histogram: BTreeMap<usize, usize>,
    /// Viewpoints per sub-instruction -> number of sub-instructions.
    pub viewpoint_histogram: BTreeMap<usize, usize>,
}

pub fn corpus_stats(episodes: &[Episode]) -> Option<CorpusStats> {
    if episodes.is_empty() {
        return None;
    }
    let mut subinstr_histogram = BTreeMap::new();
    let mut viewpoint_histogram = BTreeMap::new();
    let (mut n_sub, mut n_words, mut n_vps) = (0usize, 0usize, 0usize);
    for ep in episodes {
        *subinstr_histogram
            .entry(ep.sub_instructions.len())
            .or_insert(0) += 1;
        n_sub += ep.sub_instructions.len();
        n_words += ep.sub_instructions.iter().map(|s| s.words.len()).sum::<usize>();
        for sp in &ep.sub_paths {
            n_vps += sp.viewpoints();
            *viewpoint_histogram.entry(sp.viewpoints()).or_insert(0) += 1;
        }
    }
    Some(CorpusStats {
        episodes: episodes.len(),
        sub_instructions: n_sub,
        mean_subinstr_per_instr: n_sub as f64 / episodes.len() as f64,
        mean_words_per_subinstr: n_words as f64 / n_sub as f64,
        mean_viewpoints_per_subinstr: n_vps as f64 / n_sub as f64,
        min_viewpoints: *viewpoint_histogram.keys().next().unwrap_or(&0),
        max_viewpoints: *viewpoint_histogram.keys().next_back().unwrap_or(&0),
        min_subinstr_per_instr: *subinstr_histogram.keys().next().unwrap_or(&0),
        max_subinstr_per_instr: *subinstr_histogram.keys().next_back().unwrap_or(&0),
        subinstr_histogram,
        viewpoint_histogram,
    })
}
