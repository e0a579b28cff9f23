//! Token and character vocabularies with reserved pad/unk ids.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    chars: Vec<char>,
    #[serde(skip)]
    word_ids: HashMap<String, usize>,
    #[serde(skip)]
    char_ids: HashMap<char, usize>,
}

impl Vocabulary {
    /// Builds from token streams in first-occurrence order. Ids 0/1 are
    /// reserved for pad/unk in both the word and the char table.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(tokens: I) -> Self {
        let mut v = Vocabulary {
            words: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            chars: vec!['\u{0}', '\u{1}'],
            word_ids: HashMap::new(),
            char_ids: HashMap::new(),
        };
        v.rebuild_maps();
        for tok in tokens {
            if !v.word_ids.contains_key(tok) {
                v.word_ids.insert(tok.to_string(), v.words.len());
                v.words.push(tok.to_string());
            }
            for ch in tok.chars() {
                if let std::collections::hash_map::Entry::Vacant(e) = v.char_ids.entry(ch) {
                    e.insert(v.chars.len());
                    v.chars.push(ch);
                }
            }
        }
        v
    }

    fn rebuild_maps(&mut self) {
        self.word_ids = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        self.char_ids = self
            .chars
            .iter()
            .enumerate()
            .map(|(i, c)| (*c, i))
            .collect();
    }

    pub fn word_id(&self, token: &str) -> usize {
        self.word_ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(|s| s.as_str())
    }

    pub fn char_id(&self, ch: char) -> usize {
        self.char_ids.get(&ch).copied().unwrap_or(UNK_ID)
    }

    /// Char ids of a token, right-padded with the pad char up to `min_len`.
    pub fn char_ids_padded(&self, token: &str, min_len: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = token.chars().map(|c| self.char_id(c)).collect();
        while ids.len() < min_len {
            ids.push(PAD_ID);
        }
        ids
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut v: Vocabulary = serde_json::from_str(text)?;
        v.rebuild_maps();
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::build(["alpha", "beta"]);
        assert_eq!(v.word_id(PAD_TOKEN), PAD_ID);
        assert_eq!(v.word_id(UNK_TOKEN), UNK_ID);
        assert_eq!(v.word_id("alpha"), 2);
        assert_eq!(v.word_id("beta"), 3);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = Vocabulary::build(["alpha"]);
        assert_eq!(v.word_id("never-seen"), UNK_ID);
        assert_eq!(v.char_id('Z'), UNK_ID);
    }

    #[test]
    fn word_maps_are_bijective() {
        let v = Vocabulary::build(["a", "b", "c", "a"]);
        for id in 0..v.word_count() {
            let w = v.word(id).unwrap();
            assert_eq!(v.word_id(w), id);
        }
    }

    #[test]
    fn char_padding_reaches_min_len() {
        let v = Vocabulary::build(["ab"]);
        let ids = v.char_ids_padded("a", 3);
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[1], PAD_ID);
        assert_eq!(ids[2], PAD_ID);
    }

    #[test]
    fn json_round_trip_preserves_ids() {
        let v = Vocabulary::build(["gamma", "delta"]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back.word_id("delta"), v.word_id("delta"));
        assert_eq!(back.char_id('g'), v.char_id('g'));
        assert_eq!(back, v);
    }
}
