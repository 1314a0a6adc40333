//! Synthetic log-probability matrices for fixtures, demos and benchmarks.
//!
//! Each frame lists a few `(token, probability)` peaks; the remaining mass is
//! spread evenly over the other tokens.

use crate::logprobs::{LogProbError, LogProbMatrix};
use crate::vocab::TokenId;

/// Floor for the leftover mass so that no log-prob is `-inf`.
const MIN_REST: f64 = 1e-6;

/// Builds a frame sequence one segment at a time.
#[derive(Debug, Clone)]
pub struct MatrixBuilder {
    vocab_size: usize,
    blank: TokenId,
    frames: Vec<Vec<(TokenId, f64)>>,
}

impl MatrixBuilder {
    pub fn new(vocab_size: usize, blank: TokenId) -> Self {
        assert!((blank as usize) < vocab_size);
        Self {
            vocab_size,
            blank,
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// One frame with explicit peaks.
    pub fn frame(mut self, peaks: &[(TokenId, f64)]) -> Self {
        self.frames.push(peaks.to_vec());
        self
    }

    /// `n` frames where `token` has probability `p`.
    pub fn token(mut self, token: TokenId, p: f64, n: usize) -> Self {
        for _ in 0..n {
            self.frames.push(vec![(token, p)]);
        }
        self
    }

    /// `n` frames where blank has probability `p`.
    pub fn blank(self, p: f64, n: usize) -> Self {
        let b = self.blank;
        self.token(b, p, n)
    }

    /// A run of tokens, each held for one frame and followed by a blank frame.
    pub fn spell(mut self, tokens: &[TokenId], p: f64, blank_p: f64) -> Self {
        for &t in tokens {
            self = self.token(t, p, 1).blank(blank_p, 1);
        }
        self
    }

    pub fn build(&self) -> Result<LogProbMatrix, LogProbError> {
        peaked_matrix(self.vocab_size, &self.frames)
    }
}

/// Normalized matrix from per-frame peaks. Peak probabilities of a frame
/// should sum to at most one; repeated tokens within a frame add up.
pub fn peaked_matrix(
    vocab_size: usize,
    frames: &[Vec<(TokenId, f64)>],
) -> Result<LogProbMatrix, LogProbError> {
    let mut values = Vec::with_capacity(frames.len() * vocab_size);
    for peaks in frames {
        let mut probs = vec![f64::NAN; vocab_size];
        let mut used = 0.0;
        for &(tok, p) in peaks {
            let slot = &mut probs[tok as usize];
            *slot = if slot.is_nan() { p } else { *slot + p };
            used += p;
        }
        let free = probs.iter().filter(|p| p.is_nan()).count();
        let rest = if free == 0 {
            0.0
        } else {
            ((1.0 - used).max(MIN_REST * free as f64)) / free as f64
        };
        let total: f64 = probs.iter().map(|&p| if p.is_nan() { rest } else { p }).sum();
        values.extend(probs.iter().map(|&p| {
            let p = if p.is_nan() { rest } else { p };
            ((p / total).ln()) as f32
        }));
    }
    LogProbMatrix::new(frames.len(), vocab_size, values, true)
}

/// One-hot-like matrix: each frame's token sits `margin` nats above every
/// other token, then rows are normalized.
pub fn margin_matrix(
    vocab_size: usize,
    tokens: &[TokenId],
    margin: f64,
) -> Result<LogProbMatrix, LogProbError> {
    let others = (vocab_size - 1) as f64;
    let log_z = (1.0 + others * (-margin).exp()).ln();
    let mut values = Vec::with_capacity(tokens.len() * vocab_size);
    for &tok in tokens {
        for i in 0..vocab_size {
            let raw = if i == tok as usize { 0.0 } else { -margin };
            values.push((raw - log_z) as f32);
        }
    }
    LogProbMatrix::new(tokens.len(), vocab_size, values, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logprobs::log_sum_exp;

    #[test]
    fn rows_are_normalized() {
        let m = MatrixBuilder::new(5, 4)
            .blank(0.9, 2)
            .frame(&[(0, 0.5), (1, 0.3)])
            .token(2, 1.0, 1)
            .build()
            .unwrap();
        assert_eq!(m.frames(), 4);
        for t in 0..m.frames() {
            assert!(log_sum_exp(m.row(t)).abs() < 1e-5);
        }
        assert!((m.get(0, 4) - 0.9f64.ln()).abs() < 1e-6);
        assert!((m.get(2, 0) - 0.5f64.ln()).abs() < 1e-6);
        assert!(m.get(3, 0).is_finite());
    }

    #[test]
    fn margins() {
        let m = margin_matrix(4, &[0, 3, 1], 10.0).unwrap();
        assert!((m.get(0, 0) - m.get(0, 1) - 10.0).abs() < 1e-5);
        assert!(log_sum_exp(m.row(2)).abs() < 1e-5);
    }

    #[test]
    fn spelled_segment() {
        let b = MatrixBuilder::new(3, 2).spell(&[0, 1], 0.7, 0.9);
        assert_eq!(b.len(), 4);
    }
}
