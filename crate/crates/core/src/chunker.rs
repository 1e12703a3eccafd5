//! Split a dependency-parsed instruction into ordered sub-instructions.
//!
//! A new chunk begins at a token that is
//!
//! 1. a `root` while the running chunk already holds a `root` or `parataxis`,
//! 2. governed by the next pending `conj` word whose own governor is the root, or
//! 3. a `parataxis` while the running chunk already holds a `root` or `parataxis`.
//!
//! Each finished chunk passes through [`check_chunk`], which may fold short or
//! bare-action chunks into a neighbour. Punctuation is never part of a chunk.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::ParsedInstruction;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("no chunkable content")]
    NoContent,
    #[error("invalid chunking config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubInstruction {
    /// 1-based ordinal within the instruction.
    pub id: usize,
    /// Surface words with original casing.
    pub words: Vec<String>,
    /// Global token indices, ascending.
    pub span: Vec<usize>,
}

impl SubInstruction {
    pub fn lowercase_words(&self) -> Vec<String> {
        self.words.iter().map(|w| w.to_lowercase()).collect()
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub min_chunk_words: usize,
    pub action_lexicon: BTreeSet<String>,
    pub connective_lexicon: BTreeSet<String>,
}

const DEFAULT_ACTIONS: &[&str] = &[
    "go", "walk", "turn", "head", "continue", "stop", "wait", "exit", "enter", "move", "proceed",
    "keep", "take", "make", "step", "climb", "descend", "follow", "pass", "veer", "face", "stand",
    "stay", "cross", "leave", "approach", "rotate", "pause", "travel", "left", "right",
    "straight", "forward", "forwards", "ahead", "around", "back", "backward", "slightly", "up",
    "down", "u-turn",
];

const DEFAULT_CONNECTIVES: &[&str] = &[
    "then", "and", "after", "once", "until", "before", "when", "while", "so", "now",
];

/// Function words ignored when deciding whether a chunk is a bare action phrase.
const STOP_WORDS: &[&str] = &[
    "a", "an", "the", "to", "of", "in", "on", "at", "into", "onto", "through", "toward",
    "towards", "for", "with", "by", "from", "you", "your", "it", "its", "is", "are", "be",
    "will", "should", "all", "way", "just", "very",
];

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            min_chunk_words: 3,
            action_lexicon: DEFAULT_ACTIONS.iter().map(|s| s.to_string()).collect(),
            connective_lexicon: DEFAULT_CONNECTIVES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.min_chunk_words < 1 {
            return Err(ChunkError::Config("min_chunk_words must be >= 1".into()));
        }
        if self.action_lexicon.is_empty() || self.connective_lexicon.is_empty() {
            return Err(ChunkError::Config("lexicons must be non-empty".into()));
        }
        Ok(())
    }

    fn is_filler(&self, word: &str) -> bool {
        let w = word.to_lowercase();
        self.action_lexicon.contains(&w)
            || self.connective_lexicon.contains(&w)
            || STOP_WORDS.contains(&w.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkPosition {
    First,
    Middle,
    Last,
    /// Both first and last: there is no neighbour to merge into.
    Only,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkDisposition {
    Emit,
    MergeWithPrevious,
    MergeWithNext,
}

/// Decide what to do with a finished chunk.
pub fn check_chunk<S: AsRef<str>>(
    chunk: &[S],
    position: ChunkPosition,
    config: &ChunkingConfig,
) -> ChunkDisposition {
    use ChunkDisposition::*;
    if position == ChunkPosition::Only {
        return Emit;
    }
    let long_enough = chunk.len() >= config.min_chunk_words;
    let bare_action = chunk.iter().all(|w| config.is_filler(w.as_ref()));
    if long_enough && !bare_action {
        return Emit;
    }
    let leads_next = chunk
        .last()
        .map(|w| config.connective_lexicon.contains(&w.as_ref().to_lowercase()))
        .unwrap_or(false);
    let preferred = if leads_next { MergeWithNext } else { MergeWithPrevious };
    match (preferred, position) {
        (MergeWithPrevious, ChunkPosition::First) => MergeWithNext,
        (MergeWithNext, ChunkPosition::Last) => MergeWithPrevious,
        (d, _) => d,
    }
}

/// Global indices of `conj` tokens whose governor is their sentence's root.
pub fn find_conj_boundaries(parsed: &ParsedInstruction) -> Vec<usize> {
    parsed
        .tokens()
        .filter(|(f, t)| {
            t.relation() == "conj"
                && f.governor
                    .map(|g| parsed.token(g).relation() == "root")
                    .unwrap_or(false)
        })
        .map(|(f, _)| f.global)
        .collect()
}

/// Global indices at which a new chunk starts, before any merging.
pub fn find_boundaries(parsed: &ParsedInstruction) -> Vec<usize> {
    scan(parsed).boundaries
}

struct Scan {
    boundaries: Vec<usize>,
    /// Raw chunks as global token indices (punctuation excluded, possibly empty).
    chunks: Vec<Vec<usize>>,
}

fn scan(parsed: &ParsedInstruction) -> Scan {
    let l_conj = find_conj_boundaries(parsed);
    let mut k = 0usize;
    let mut boundaries = Vec::new();
    let mut chunks = Vec::new();
    let mut chunk: Vec<usize> = Vec::new();
    let mut relations: Vec<&str> = Vec::new();

    for (f, tok) in parsed.tokens() {
        let rel = tok.relation();
        let clause_open = relations.iter().any(|r| *r == "root" || *r == "parataxis");
        let boundary = if rel == "root" && clause_open {
            true
        } else if k < l_conj.len() && f.governor == Some(l_conj[k]) {
            k += 1;
            true
        } else {
            rel == "parataxis" && clause_open
        };
        if boundary {
            boundaries.push(f.global);
            chunks.push(std::mem::take(&mut chunk));
            relations.clear();
        }
        if !tok.is_punct() {
            chunk.push(f.global);
            relations.push(rel);
        }
    }
    debug_assert!(k <= l_conj.len());
    chunks.push(chunk);
    Scan { boundaries, chunks }
}

/// Chunk an instruction into sub-instructions covering every non-punctuation token.
pub fn chunk_instruction(
    parsed: &ParsedInstruction,
    config: &ChunkingConfig,
) -> Result<Vec<SubInstruction>, ChunkError> {
    config.validate()?;
    let raw: Vec<Vec<usize>> = scan(parsed)
        .chunks
        .into_iter()
        .filter(|c| !c.is_empty())
        .collect();
    if raw.is_empty() {
        return Err(ChunkError::NoContent);
    }

    let word = |g: usize| parsed.token(g).form.clone();
    let mut emitted: Vec<Vec<usize>> = Vec::new();
    let mut carry: Vec<usize> = Vec::new();
    let n = raw.len();
    for (i, chunk) in raw.into_iter().enumerate() {
        let mut combined = std::mem::take(&mut carry);
        combined.extend(chunk);
        let is_last = i + 1 == n;
        let position = match (emitted.is_empty(), is_last) {
            (true, true) => ChunkPosition::Only,
            (true, false) => ChunkPosition::First,
            (false, true) => ChunkPosition::Last,
            (false, false) => ChunkPosition::Middle,
        };
        let words: Vec<String> = combined.iter().map(|&g| word(g)).collect();
        match check_chunk(&words, position, config) {
            ChunkDisposition::Emit => emitted.push(combined),
            ChunkDisposition::MergeWithNext => carry = combined,
            ChunkDisposition::MergeWithPrevious => match emitted.last_mut() {
                Some(prev) => prev.extend(combined),
                None => emitted.push(combined),
            },
        }
    }

    Ok(emitted
        .into_iter()
        .enumerate()
        .map(|(i, span)| SubInstruction {
            id: i + 1,
            words: span.iter().map(|&g| word(g)).collect(),
            span,
        })
        .collect())
}
