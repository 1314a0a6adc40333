//! Greedy CTC decoding with word-level alignment, and ingestion of externally
//! produced Transducer word alignments.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logprobs::LogProbMatrix;
use crate::vocab::{TokenId, Vocabulary, WordBoundary};

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: empty word")]
    EmptyWord { line: usize },
    #[error("line {line}: negative frame index")]
    NegativeFrame { line: usize },
    #[error("line {line}: start frame {start} after end frame {end}")]
    InvertedInterval { line: usize, start: i64, end: i64 },
    #[error("line {line}: word overlaps the previous word")]
    OverlappingWords { line: usize },
    #[error("line {line}: words are not sorted by start frame")]
    Unsorted { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedWord {
    pub word: String,
    pub start_frame: usize,
    /// Inclusive.
    pub end_frame: usize,
    /// `ctc_w`-weighted log-probability mass, or `-inf` when unknown.
    pub score: f64,
}

impl AlignedWord {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start_frame <= end && start <= self.end_frame
    }
}

/// Words ordered by start frame with pairwise disjoint intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WordAlignment {
    pub words: Vec<AlignedWord>,
    pub frames: usize,
    /// Per-frame `ctc_w * log p(blank)`; empty when the alignment does not
    /// come from a CTC matrix.
    pub blank_scores: Vec<f64>,
}

impl WordAlignment {
    pub fn text(&self) -> String {
        self.words
            .iter()
            .map(|w| w.word.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Weighted blank mass over `[start, end]`; frames without a profile
    /// contribute nothing.
    pub fn blank_mass(&self, start: usize, end: usize) -> f64 {
        if start >= self.blank_scores.len() {
            return 0.0;
        }
        let end = end.min(self.blank_scores.len() - 1);
        self.blank_scores[start..=end].iter().sum()
    }
}

struct Run {
    token: TokenId,
    start: usize,
    end: usize,
    mass: f64,
}

/// Greedy decoding: per-frame argmax (lowest id on ties), repeats collapsed,
/// blanks dropped, tokens grouped into words at word boundaries. A word spans
/// from its first token's onset to the last frame of its final token, and
/// scores `ctc_w` times the log-probs of every frame of its runs.
pub fn greedy_ctc_align(logprobs: &LogProbMatrix, vocab: &Vocabulary, ctc_w: f64) -> WordAlignment {
    let blank = vocab.blank_id();
    let mut runs: Vec<Run> = Vec::new();
    let mut blank_scores = Vec::with_capacity(logprobs.frames());
    for t in 0..logprobs.frames() {
        let row = logprobs.row(t);
        blank_scores.push(ctc_w * f64::from(row[blank as usize]));
        let (token, value) = argmax(row);
        let lp = f64::from(value);
        match runs.last_mut() {
            Some(r) if r.token == token && r.end + 1 == t => {
                r.end = t;
                r.mass += lp;
            }
            _ => runs.push(Run {
                token,
                start: t,
                end: t,
                mass: lp,
            }),
        }
    }

    let mut words: Vec<AlignedWord> = Vec::new();
    let mut current: Option<AlignedWord> = None;
    let flush = |cur: &mut Option<AlignedWord>, words: &mut Vec<AlignedWord>| {
        if let Some(w) = cur.take() {
            if !w.word.is_empty() {
                words.push(w);
            }
        }
    };
    for run in runs.iter().filter(|r| r.token != blank) {
        let starts = match vocab.boundary() {
            WordBoundary::Prefix(_) => vocab.starts_word(run.token),
            WordBoundary::Delimiter(_) => {
                if Some(run.token) == vocab.delimiter_id() {
                    flush(&mut current, &mut words);
                    continue;
                }
                false
            }
        };
        if starts {
            flush(&mut current, &mut words);
        }
        let w = current.get_or_insert_with(|| AlignedWord {
            word: String::new(),
            start_frame: run.start,
            end_frame: run.end,
            score: 0.0,
        });
        w.word.push_str(vocab.surface(run.token));
        w.end_frame = run.end;
        w.score += ctc_w * run.mass;
    }
    flush(&mut current, &mut words);

    WordAlignment {
        words,
        frames: logprobs.frames(),
        blank_scores,
    }
}

fn argmax(row: &[f32]) -> (TokenId, f32) {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    (best as TokenId, row[best])
}

#[derive(Debug, Deserialize)]
struct TransducerWordRecord {
    word: String,
    start_frame: i64,
    end_frame: i64,
    #[serde(default)]
    score: Option<f64>,
}

/// Reads `{"word", "start_frame", "end_frame", "score"?}` JSON lines. Missing
/// scores become `-inf`.
pub fn load_transducer_alignment<R: BufRead>(source: R) -> Result<WordAlignment, AlignmentError> {
    let mut words: Vec<AlignedWord> = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransducerWordRecord = serde_json::from_str(&line)
            .map_err(|source| AlignmentError::Json { line: line_no, source })?;
        if rec.word.trim().is_empty() {
            return Err(AlignmentError::EmptyWord { line: line_no });
        }
        if rec.start_frame < 0 || rec.end_frame < 0 {
            return Err(AlignmentError::NegativeFrame { line: line_no });
        }
        if rec.start_frame > rec.end_frame {
            return Err(AlignmentError::InvertedInterval {
                line: line_no,
                start: rec.start_frame,
                end: rec.end_frame,
            });
        }
        let (start, end) = (rec.start_frame as usize, rec.end_frame as usize);
        if let Some(prev) = words.last() {
            if start < prev.start_frame {
                return Err(AlignmentError::Unsorted { line: line_no });
            }
            if start <= prev.end_frame {
                return Err(AlignmentError::OverlappingWords { line: line_no });
            }
        }
        words.push(AlignedWord {
            word: rec.word.trim().to_string(),
            start_frame: start,
            end_frame: end,
            score: rec.score.unwrap_or(f64::NEG_INFINITY),
        });
    }
    let frames = words.last().map_or(0, |w| w.end_frame + 1);
    Ok(WordAlignment {
        words,
        frames,
        blank_scores: Vec::new(),
    })
}
