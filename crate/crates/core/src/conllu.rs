//! Reader for dependency-annotated instructions in CoNLL-U form.
//!
//! Only the columns the chunker needs are kept: ID, FORM, UPOS, HEAD and
//! DEPREL. Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped.
//! A file may hold several instructions; each one starts with a
//! `# text_id = <id>` comment.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConlluError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("sentence {sentence} (ending at line {line}): {message}")]
    Structure {
        sentence: usize,
        line: usize,
        message: String,
    },
    #[error("no sentences in input")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// 1-based position within the sentence.
    pub index: usize,
    pub form: String,
    pub lower: String,
    pub upos: String,
    /// Governor index within the sentence; 0 is the sentence root.
    pub head: usize,
    pub deprel: String,
}

impl Token {
    pub fn new(index: usize, form: &str, upos: &str, head: usize, deprel: &str) -> Self {
        Token {
            index,
            form: form.to_string(),
            lower: form.to_lowercase(),
            upos: upos.to_string(),
            head,
            deprel: deprel.to_string(),
        }
    }

    /// Universal relation without its language-specific subtype (`nmod:poss` -> `nmod`).
    pub fn relation(&self) -> &str {
        self.deprel.split(':').next().unwrap_or(&self.deprel)
    }

    pub fn is_punct(&self) -> bool {
        self.relation() == "punct"
    }
}

/// Back-reference from the flat token sequence into the sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlatToken {
    /// 1-based index over the whole instruction.
    pub global: usize,
    pub sentence: usize,
    pub local: usize,
    /// Global index of the governor; `None` for sentence roots.
    pub governor: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub text_id: Option<String>,
    pub sentences: Vec<Vec<Token>>,
    pub flat_tokens: Vec<FlatToken>,
}

impl ParsedInstruction {
    /// Build from sentences, computing the flat index.
    pub fn from_sentences(text_id: Option<String>, sentences: Vec<Vec<Token>>) -> Self {
        let mut flat_tokens = Vec::new();
        let mut offset = 0;
        for (s, sentence) in sentences.iter().enumerate() {
            for (l, tok) in sentence.iter().enumerate() {
                flat_tokens.push(FlatToken {
                    global: offset + l + 1,
                    sentence: s,
                    local: l,
                    governor: (tok.head > 0).then(|| offset + tok.head),
                });
            }
            offset += sentence.len();
        }
        ParsedInstruction {
            text_id,
            sentences,
            flat_tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.flat_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat_tokens.is_empty()
    }

    /// Token at a 1-based global index.
    pub fn token(&self, global: usize) -> &Token {
        let f = &self.flat_tokens[global - 1];
        &self.sentences[f.sentence][f.local]
    }

    pub fn tokens(&self) -> impl Iterator<Item = (&FlatToken, &Token)> {
        self.flat_tokens
            .iter()
            .map(move |f| (f, &self.sentences[f.sentence][f.local]))
    }

    /// Global indices of tokens where `head = 0` and `deprel = root` disagree.
    pub fn root_head_mismatches(&self) -> Vec<usize> {
        self.tokens()
            .filter(|(_, t)| (t.head == 0) != (t.relation() == "root"))
            .map(|(f, _)| f.global)
            .collect()
    }

    /// Serialize back to 10-column CoNLL-U. Unkept columns are written as `_`.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        if let Some(id) = &self.text_id {
            let _ = writeln!(out, "# text_id = {id}");
        }
        for sentence in &self.sentences {
            for t in sentence {
                let _ = writeln!(
                    out,
                    "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                    t.index, t.form, t.upos, t.head, t.deprel
                );
            }
            out.push('\n');
        }
        out
    }
}

/// Parse a single instruction. `# text_id` comments are recorded but do not
/// split the input; use [`parse_conllu_documents`] for multi-instruction files.
pub fn parse_conllu(text: &str) -> Result<ParsedInstruction, ConlluError> {
    let mut docs = parse_lines(text, false)?;
    match docs.len() {
        0 => Err(ConlluError::Empty),
        _ => Ok(docs.remove(0)),
    }
}

/// Parse a file holding several instructions separated by `# text_id = <id>`.
pub fn parse_conllu_documents(text: &str) -> Result<Vec<ParsedInstruction>, ConlluError> {
    let docs = parse_lines(text, true)?;
    if docs.is_empty() {
        return Err(ConlluError::Empty);
    }
    Ok(docs)
}

fn parse_lines(text: &str, split_on_id: bool) -> Result<Vec<ParsedInstruction>, ConlluError> {
    let mut docs: Vec<(Option<String>, Vec<Vec<Token>>)> = Vec::new();
    let mut current_id: Option<String> = None;
    let mut sentences: Vec<Vec<Token>> = Vec::new();
    let mut sentence: Vec<Token> = Vec::new();
    let mut sentence_count = 0usize;

    let finish_sentence = |sentence: &mut Vec<Token>,
                               sentences: &mut Vec<Vec<Token>>,
                               count: &mut usize,
                               line: usize|
     -> Result<(), ConlluError> {
        if sentence.is_empty() {
            return Ok(());
        }
        *count += 1;
        let roots = sentence.iter().filter(|t| t.relation() == "root").count();
        if roots != 1 {
            return Err(ConlluError::Structure {
                sentence: *count,
                line,
                message: format!("expected exactly one root token, found {roots}"),
            });
        }
        let n = sentence.len();
        if let Some(t) = sentence.iter().find(|t| t.head > n) {
            return Err(ConlluError::Structure {
                sentence: *count,
                line,
                message: format!("token {} has head {} outside the sentence", t.index, t.head),
            });
        }
        sentences.push(std::mem::take(sentence));
        Ok(())
    };

    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish_sentence(&mut sentence, &mut sentences, &mut sentence_count, lineno)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = parse_text_id(comment) {
                if split_on_id {
                    finish_sentence(&mut sentence, &mut sentences, &mut sentence_count, lineno)?;
                    if !sentences.is_empty() {
                        docs.push((current_id.take(), std::mem::take(&mut sentences)));
                    }
                }
                if current_id.is_none() || split_on_id {
                    current_id = Some(id);
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::Malformed {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id.parse().map_err(|_| ConlluError::Malformed {
            line: lineno,
            message: format!("non-integer ID `{id}`"),
        })?;
        let head: usize = cols[6].parse().map_err(|_| ConlluError::Malformed {
            line: lineno,
            message: format!("non-integer HEAD `{}`", cols[6]),
        })?;
        if index != sentence.len() + 1 {
            return Err(ConlluError::Malformed {
                line: lineno,
                message: format!("ID {index} out of sequence (expected {})", sentence.len() + 1),
            });
        }
        if index == 0 || head == index {
            return Err(ConlluError::Malformed {
                line: lineno,
                message: format!("token {index} cannot govern itself"),
            });
        }
        sentence.push(Token::new(index, cols[1], cols[3], head, cols[7]));
    }
    finish_sentence(&mut sentence, &mut sentences, &mut sentence_count, last_line)?;
    if !sentences.is_empty() {
        docs.push((current_id, sentences));
    }

    Ok(docs
        .into_iter()
        .map(|(id, s)| {
            let parsed = ParsedInstruction::from_sentences(id, s);
            let bad = parsed.root_head_mismatches();
            if !bad.is_empty() {
                log::warn!(
                    "instruction {:?}: head/root disagreement at tokens {:?}",
                    parsed.text_id,
                    bad
                );
            }
            parsed
        })
        .collect())
}

fn parse_text_id(comment: &str) -> Option<String> {
    let (key, value) = comment.split_once('=')?;
    (key.trim() == "text_id").then(|| value.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, form: &str, head: &str, rel: &str) -> String {
        format!("{id}\t{form}\t{}\tX\t_\t_\t{head}\t{rel}\t_\t_\n", form.to_lowercase())
    }

    #[test]
    fn two_token_sentence() {
        let text = row("1", "go", "0", "root") + &row("2", "left", "1", "advmod");
        let p = parse_conllu(&text).unwrap();
        assert_eq!(p.sentences.len(), 1);
        assert_eq!(p.len(), 2);
        let t = p.token(1);
        assert_eq!((t.deprel.as_str(), t.head), ("root", 0));
        assert_eq!(p.flat_tokens[1].governor, Some(1));
        assert_eq!(p.flat_tokens[0].governor, None);
    }

    #[test]
    fn sentences_concatenate_with_global_indices() {
        let text = row("1", "Turn", "0", "root")
            + &row("2", "left", "1", "advmod")
            + "\n"
            + &row("1", "Stop", "0", "root")
            + &row("2", ".", "1", "punct");
        let p = parse_conllu(&text).unwrap();
        assert_eq!(p.sentences.len(), 2);
        let globals: Vec<usize> = p.flat_tokens.iter().map(|f| f.global).collect();
        assert_eq!(globals, vec![1, 2, 3, 4]);
        assert_eq!(p.flat_tokens[3].governor, Some(3));
        assert_eq!(p.token(3).lower, "stop");
        assert_eq!(p.token(3).form, "Stop");
    }

    #[test]
    fn bad_head_names_line() {
        let text = row("1", "go", "0", "root") + &row("2", "left", "x", "advmod");
        let err = parse_conllu(&text).unwrap_err();
        assert_eq!(
            err,
            ConlluError::Malformed {
                line: 2,
                message: "non-integer HEAD `x`".into()
            }
        );
        assert!(err.to_string().starts_with("line 2:"));
    }

    #[test]
    fn wrong_column_count() {
        let err = parse_conllu("1\tgo\t_\n").unwrap_err();
        assert!(matches!(err, ConlluError::Malformed { line: 1, .. }));
    }

    #[test]
    fn root_count_is_structural() {
        let none = row("1", "go", "2", "advmod") + &row("2", "left", "1", "advmod");
        assert!(matches!(
            parse_conllu(&none),
            Err(ConlluError::Structure { .. })
        ));
        let two = row("1", "go", "0", "root") + &row("2", "stop", "0", "root");
        assert!(matches!(parse_conllu(&two), Err(ConlluError::Structure { .. })));
    }

    #[test]
    fn multiword_and_empty_nodes_skipped() {
        let text = "# sent_id = 1\n".to_string()
            + &row("1", "go", "0", "root")
            + "2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n"
            + &row("2", "do", "1", "aux")
            + "2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n"
            + &row("3", "n't", "1", "advmod");
        let p = parse_conllu(&text).unwrap();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn documents_split_on_text_id() {
        let text = "# text_id = a\n".to_string()
            + &row("1", "go", "0", "root")
            + "\n# text_id = b\n"
            + &row("1", "stop", "0", "root")
            + "\n"
            + &row("1", "now", "0", "root");
        let docs = parse_conllu_documents(&text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text_id.as_deref(), Some("a"));
        assert_eq!(docs[1].text_id.as_deref(), Some("b"));
        assert_eq!(docs[1].sentences.len(), 2);
    }

    #[test]
    fn subtyped_relations() {
        let t = Token::new(1, "x", "X", 2, "conj:and");
        assert_eq!(t.relation(), "conj");
    }
}
