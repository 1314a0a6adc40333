//! Token vocabulary of the CTC head.

use std::collections::HashMap;
use std::io::Read;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Index of a token in the vocabulary.
pub type TokenId = u32;

/// Default start-of-word marker used by sentencepiece-style BPE vocabularies.
pub const DEFAULT_BOUNDARY_MARKER: &str = "\u{2581}";

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary is empty")]
    Empty,
    #[error("duplicate token {token:?} at lines {first} and {second}")]
    DuplicateToken {
        token: String,
        first: usize,
        second: usize,
    },
    #[error("empty token at line {0}")]
    EmptyToken(usize),
    #[error("blank id {blank_id} out of range for vocabulary of size {size}")]
    BlankOutOfRange { blank_id: usize, size: usize },
    #[error("word delimiter token {0:?} is not in the vocabulary")]
    UnknownDelimiter(String),
    #[error("vocabulary is not valid UTF-8")]
    Utf8(#[from] std::string::FromUtf8Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How word boundaries are encoded in the token inventory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordBoundary {
    /// A token whose text begins with the marker starts a new word (BPE style).
    Prefix(String),
    /// A dedicated token separates words (character vocabularies).
    Delimiter(String),
}

impl Default for WordBoundary {
    fn default() -> Self {
        WordBoundary::Prefix(DEFAULT_BOUNDARY_MARKER.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    blank_id: TokenId,
    boundary: WordBoundary,
    delimiter_id: Option<TokenId>,
    max_token_chars: usize,
}

impl Vocabulary {
    /// Builds a vocabulary with the blank at the last index and the default
    /// `▁` boundary marker.
    pub fn new<I, S>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(VocabError::Empty);
        }
        let blank = tokens.len() - 1;
        Self::with_options(tokens, blank, WordBoundary::default())
    }

    pub fn with_options(
        tokens: Vec<String>,
        blank_id: usize,
        boundary: WordBoundary,
    ) -> Result<Self, VocabError> {
        if tokens.is_empty() {
            return Err(VocabError::Empty);
        }
        if blank_id >= tokens.len() {
            return Err(VocabError::BlankOutOfRange {
                blank_id,
                size: tokens.len(),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(VocabError::EmptyToken(i + 1));
            }
            if let Some(&first) = index.get(tok.as_str()) {
                return Err(VocabError::DuplicateToken {
                    token: tok.clone(),
                    first: first as usize + 1,
                    second: i + 1,
                });
            }
            index.insert(tok.clone(), i as TokenId);
        }
        let delimiter_id = match &boundary {
            WordBoundary::Prefix(_) => None,
            WordBoundary::Delimiter(d) => Some(
                *index
                    .get(d.as_str())
                    .ok_or_else(|| VocabError::UnknownDelimiter(d.clone()))?,
            ),
        };
        let max_token_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Ok(Self {
            tokens,
            index,
            blank_id: blank_id as TokenId,
            boundary,
            delimiter_id,
            max_token_chars,
        })
    }

    /// Reads one token per line. The line number (zero-based) is the token id.
    pub fn load<R: Read>(mut source: R) -> Result<Self, VocabError> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        let text = String::from_utf8(buf)?;
        let tokens = parse_lines(&text);
        if tokens.is_empty() {
            return Err(VocabError::Empty);
        }
        Vocabulary::new(tokens)
    }

    /// Re-targets blank id and word boundary mode, keeping the token list.
    pub fn reconfigure(
        self,
        blank_id: Option<usize>,
        boundary: WordBoundary,
    ) -> Result<Self, VocabError> {
        let blank = blank_id.unwrap_or(self.tokens.len() - 1);
        Self::with_options(self.tokens, blank, boundary)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn blank_id(&self) -> TokenId {
        self.blank_id
    }

    pub fn boundary(&self) -> &WordBoundary {
        &self.boundary
    }

    /// Delimiter token id in character mode.
    pub fn delimiter_id(&self) -> Option<TokenId> {
        self.delimiter_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub(crate) fn max_token_chars(&self) -> usize {
        self.max_token_chars
    }

    /// Whether `id` opens a new word in prefix mode.
    pub fn starts_word(&self, id: TokenId) -> bool {
        match &self.boundary {
            WordBoundary::Prefix(marker) => self
                .token(id)
                .is_some_and(|t| t.starts_with(marker.as_str())),
            WordBoundary::Delimiter(_) => false,
        }
    }

    /// Token text with the boundary marker removed.
    pub fn surface(&self, id: TokenId) -> &str {
        let tok = self.token(id).unwrap_or("");
        match &self.boundary {
            WordBoundary::Prefix(marker) => tok.strip_prefix(marker.as_str()).unwrap_or(tok),
            WordBoundary::Delimiter(_) => tok,
        }
    }

    /// SHA-256 over tokens, blank id and boundary mode. Binds serialized
    /// graphs to the vocabulary their token ids refer to.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for tok in &self.tokens {
            h.update((tok.len() as u64).to_le_bytes());
            h.update(tok.as_bytes());
        }
        h.update(self.blank_id.to_le_bytes());
        match &self.boundary {
            WordBoundary::Prefix(m) => {
                h.update(b"P");
                h.update(m.as_bytes());
            }
            WordBoundary::Delimiter(d) => {
                h.update(b"D");
                h.update(d.as_bytes());
            }
        }
        h.finalize().into()
    }
}

fn parse_lines(text: &str) -> Vec<String> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    lines
        .into_iter()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_blank_is_last() {
        let v = Vocabulary::load("a\nb\n\u{2581}c\n\u{2205}\n".as_bytes()).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.blank_id(), 3);
        assert_eq!(v.id("\u{2581}c"), Some(2));
    }

    #[test]
    fn duplicate_rejected() {
        let err = Vocabulary::load("a\nb\na\n".as_bytes()).unwrap_err();
        assert!(matches!(err, VocabError::DuplicateToken { first: 1, second: 3, .. }));
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(
            Vocabulary::load("".as_bytes()),
            Err(VocabError::Empty)
        ));
    }

    #[test]
    fn bpe_sized_vocab() {
        let text: String = (0..1024).map(|i| format!("t{i}\n")).collect();
        let v = Vocabulary::load(text.as_bytes()).unwrap();
        assert_eq!(v.len(), 1024);
        assert_eq!(v.blank_id(), 1023);
    }

    #[test]
    fn order_preserved_and_crlf() {
        let v = Vocabulary::load("x\r\ny\r\nz".as_bytes()).unwrap();
        assert_eq!(v.tokens(), &["x", "y", "z"]);
    }

    #[test]
    fn delimiter_mode() {
        let v = Vocabulary::new(["a", "b", "|", "<b>"])
            .unwrap()
            .reconfigure(Some(3), WordBoundary::Delimiter("|".into()))
            .unwrap();
        assert_eq!(v.delimiter_id(), Some(2));
        assert!(!v.starts_word(0));
        assert!(Vocabulary::new(["a", "b"])
            .unwrap()
            .reconfigure(None, WordBoundary::Delimiter("|".into()))
            .is_err());
    }

    #[test]
    fn fingerprint_depends_on_blank() {
        let a = Vocabulary::new(["a", "b", "c"]).unwrap();
        let b = a.clone().reconfigure(Some(0), WordBoundary::default()).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }
}
