// SPDX-License-Identifier: MIT OR Apache-2.0

//! Closed word-level vocabulary and the whitespace/punctuation tokenizer.

use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

const PUNCT: &[char] = &[',', '.', ':', '?'];

/// Split text on whitespace, then peel punctuation characters off each word
/// into standalone tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        for ch in word.chars() {
            if PUNCT.contains(&ch) {
                if !current.is_empty() {
                    out.push(std::mem::take(&mut current));
                }
                out.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            out.push(current);
        }
    }
    out
}

/// Inverse of [`tokenize`] for text produced by the templates: words are
/// joined by single spaces and punctuation attaches to the preceding word.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        let tok = tok.as_ref();
        let is_punct = tok.len() == 1 && tok.chars().all(|c| PUNCT.contains(&c));
        if i > 0 && !is_punct {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// Ordered token list with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(LabError::Config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| LabError::UnknownSymbol(token.to_string()))
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(LabError::TokenOutOfRange { id, vocab: self.tokens.len() })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Tokenize `text` and map every token to its id.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let toks = ids.iter().map(|&i| self.token(i)).collect::<Result<Vec<_>>>()?;
        Ok(detokenize(&toks))
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Vocabulary::new(tokens).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_punctuation() {
        assert_eq!(
            tokenize("Q: Tell me the capital of France. A: Berlin"),
            vec!["Q", ":", "Tell", "me", "the", "capital", "of", "France", ".", "A", ":", "Berlin"]
        );
        assert_eq!(tokenize("Given New Zealand, its capital is"), vec![
            "Given", "New", "Zealand", ",", "its", "capital", "is"
        ]);
    }

    #[test]
    fn detokenize_inverts_template_text() {
        for text in [
            "The capital of France is",
            "Given France, its capital is",
            "Q: Tell me the capital of France. A: Berlin",
            "The capital of France is Berlin. Given France, its capital is",
        ] {
            assert_eq!(detokenize(&tokenize(text)), text);
        }
    }

    #[test]
    fn duplicate_tokens_rejected() {
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn unknown_symbol_is_named() {
        let v = Vocabulary::new(vec!["The".into()]).unwrap();
        match v.encode("The Paris") {
            Err(LabError::UnknownSymbol(s)) => assert_eq!(s, "Paris"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
