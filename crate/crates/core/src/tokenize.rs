//! Greedy longest-match segmentation of biasing words into vocabulary tokens.

use thiserror::Error;

use crate::vocab::{TokenId, Vocabulary, WordBoundary};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("nothing to tokenize")]
    EmptyInput,
    #[error("cannot segment {word:?}: no token covers {rest:?}")]
    Unsegmentable { word: String, rest: String },
    #[error("{0:?} is not a spellable vocabulary token")]
    UnknownToken(String),
}

/// Marks a spelling written directly as whitespace-separated vocabulary
/// tokens, e.g. `tokens:▁g ▁p ▁u`, for lists produced by an external tokenizer.
pub const PRETOKENIZED_PREFIX: &str = "tokens:";

/// Tokenizes a spelling, honoring [`PRETOKENIZED_PREFIX`].
pub fn tokenize_spelling(spelling: &str, vocab: &Vocabulary) -> Result<Vec<TokenId>, TokenizeError> {
    let Some(tokens) = spelling.strip_prefix(PRETOKENIZED_PREFIX) else {
        return tokenize(spelling, vocab);
    };
    let ids = tokens
        .split_whitespace()
        .map(|t| {
            vocab
                .id(t)
                .filter(|&id| id != vocab.blank_id())
                .ok_or_else(|| TokenizeError::UnknownToken(t.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ids.is_empty() {
        return Err(TokenizeError::EmptyInput);
    }
    Ok(ids)
}

/// Segments a word or whitespace-separated phrase.
///
/// In prefix mode each word is matched as `marker + word`, falling back to the
/// bare word when no token starts with the marker there. In delimiter mode the
/// delimiter token is placed between words.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Result<Vec<TokenId>, TokenizeError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(TokenizeError::EmptyInput);
    }
    let mut out = Vec::new();
    for (i, word) in words.iter().enumerate() {
        match vocab.boundary() {
            WordBoundary::Prefix(marker) => {
                let marked = format!("{marker}{word}");
                match longest_match(&marked, vocab) {
                    Ok(ids) => out.extend(ids),
                    Err(_) => out.extend(longest_match(word, vocab)?),
                }
            }
            WordBoundary::Delimiter(_) => {
                if i > 0 {
                    out.extend(vocab.delimiter_id());
                }
                out.extend(longest_match(word, vocab)?);
            }
        }
    }
    Ok(out)
}

fn longest_match(s: &str, vocab: &Vocabulary) -> Result<Vec<TokenId>, TokenizeError> {
    let bounds: Vec<usize> = s
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(s.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    let mut ids = Vec::new();
    let mut i = 0;
    while i < n_chars {
        let longest = vocab.max_token_chars().min(n_chars - i);
        let hit = (1..=longest).rev().find_map(|len| {
            vocab
                .id(&s[bounds[i]..bounds[i + len]])
                .filter(|&id| id != vocab.blank_id() && Some(id) != vocab.delimiter_id())
                .map(|id| (id, len))
        });
        match hit {
            Some((id, len)) => {
                ids.push(id);
                i += len;
            }
            None => {
                return Err(TokenizeError::Unsegmentable {
                    word: s.to_string(),
                    rest: s[bounds[i]..].to_string(),
                })
            }
        }
    }
    Ok(ids)
}
