use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Lower-cased word list; id 0 is reserved for unknown words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Build from words in first-seen order.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(words: I) -> Self {
        let mut v = Vocab::from(vec![UNK.to_string()]);
        for w in words {
            let w = w.to_lowercase();
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len());
                v.words.push(w);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl From<Vec<String>> for Vocab {
    fn from(mut words: Vec<String>) -> Self {
        if words.first().map(String::as_str) != Some(UNK) {
            words.insert(0, UNK.to_string());
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_words_map_to_reserved_id() {
        let v = Vocab::build(["Walk", "left", "walk"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.encode(&["walk", "LEFT", "sofa"]), vec![1, 2, UNK_ID]);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
