//! Frame-synchronous word spotting over CTC log-probabilities.
//!
//! Every frame a fresh empty hypothesis is seeded at the root of the context
//! graph, so a word may start anywhere. Hypotheses follow the CTC topology of
//! the trie: a node may re-emit its own token (unless a blank was seen since,
//! which would spell the token twice), absorb a blank, or advance to a child.
//! Each non-blank emission earns the `cb_w` bonus. A hypothesis landing on an
//! end-of-word node through a non-blank emission produces a candidate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SpotterConfig};
use crate::graph::{ContextGraph, EntryId, NodeId, ROOT};
use crate::logprobs::LogProbMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SpotError {
    #[error("log-prob matrix has {matrix} columns but the graph vocabulary has {graph}")]
    DimensionMismatch { matrix: usize, graph: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// In-flight search state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    pub node: NodeId,
    pub score: f64,
    pub start_frame: usize,
    /// A blank was absorbed since the last emission of this node's token.
    pub blank_seen: bool,
}

impl Hypothesis {
    /// An empty hypothesis sits at the root without emissions.
    pub fn is_empty(&self) -> bool {
        self.node == ROOT
    }
}

/// A detected biasing word. `end_frame` is inclusive and is the frame of the
/// word's final non-blank emission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpottedCandidate {
    pub entry_id: EntryId,
    pub word: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub score: f64,
}

impl SpottedCandidate {
    pub fn overlaps(&self, start: usize, end: usize) -> bool {
        self.start_frame <= end && start <= self.end_frame
    }

    fn span(&self) -> usize {
        self.end_frame - self.start_frame
    }
}

/// Runs the spotter over the whole matrix and returns every candidate, before
/// overlap resolution.
pub fn spot(
    logprobs: &LogProbMatrix,
    graph: &ContextGraph,
    cfg: &SpotterConfig,
) -> Result<Vec<SpottedCandidate>, SpotError> {
    cfg.validate()?;
    if logprobs.vocab_size() != graph.vocab_size() {
        return Err(SpotError::DimensionMismatch {
            matrix: logprobs.vocab_size(),
            graph: graph.vocab_size(),
        });
    }
    let mut candidates = Vec::new();
    if graph.num_nodes() <= 1 {
        return Ok(candidates);
    }
    let blank = graph.blank_id() as usize;
    let root = graph.node(ROOT);
    let mut active: Vec<Hypothesis> = Vec::new();
    let mut next: Vec<Hypothesis> = Vec::new();

    for t in 0..logprobs.frames() {
        let row = logprobs.row(t);
        let lp = |tok: u32| f64::from(row[tok as usize]);
        let blank_lp = f64::from(row[blank]);
        next.clear();

        // The fresh empty hypothesis for this frame. Empty hypotheses never
        // absorb blanks, so one that is not expanded now simply disappears.
        if !(cfg.pruning_enabled && blank_lp > cfg.beta_thr) {
            for &(tok, child) in &root.children {
                let l = lp(tok);
                if cfg.pruning_enabled && l < cfg.gamma_thr {
                    continue;
                }
                push_finite(
                    &mut next,
                    Hypothesis {
                        node: child,
                        score: l + cfg.cb_w,
                        start_frame: t,
                        blank_seen: false,
                    },
                );
            }
        }

        for hyp in &active {
            let node = graph.node(hyp.node);
            let own = node.token.expect("non-root hypothesis");
            // A leaf after a blank has no legal continuation.
            if !node.children.is_empty() {
                push_finite(
                    &mut next,
                    Hypothesis {
                        score: hyp.score + blank_lp,
                        blank_seen: true,
                        ..*hyp
                    },
                );
            }
            if !hyp.blank_seen {
                push_finite(
                    &mut next,
                    Hypothesis {
                        score: hyp.score + lp(own) + cfg.cb_w,
                        ..*hyp
                    },
                );
            }
            for &(tok, child) in &node.children {
                if tok == own && !hyp.blank_seen {
                    continue;
                }
                push_finite(
                    &mut next,
                    Hypothesis {
                        node: child,
                        score: hyp.score + lp(tok) + cfg.cb_w,
                        start_frame: hyp.start_frame,
                        blank_seen: false,
                    },
                );
            }
        }

        // Hypotheses sharing node, blank flag and start frame have identical
        // futures; only the best one matters.
        next.sort_unstable_by(|a, b| {
            (a.node, a.blank_seen, a.start_frame)
                .cmp(&(b.node, b.blank_seen, b.start_frame))
                .then_with(|| b.score.total_cmp(&a.score))
        });
        next.dedup_by(|b, a| {
            a.node == b.node && a.blank_seen == b.blank_seen && a.start_frame == b.start_frame
        });

        for h in &next {
            if h.blank_seen {
                continue;
            }
            if let Some(entry_id) = graph.node(h.node).entry {
                candidates.push(SpottedCandidate {
                    entry_id,
                    word: graph.entry(entry_id).canonical.clone(),
                    start_frame: h.start_frame,
                    end_frame: t,
                    score: h.score,
                });
            }
        }

        if cfg.pruning_enabled {
            beam_and_state_prune(&mut next, cfg.beam_thr);
        }
        std::mem::swap(&mut active, &mut next);
    }
    Ok(candidates)
}

#[inline]
fn push_finite(out: &mut Vec<Hypothesis>, h: Hypothesis) {
    if h.score.is_finite() {
        out.push(h);
    }
}

/// Beam pruning against the frame-best score (the fresh empty hypothesis
/// counts with score 0), then one survivor per `(node, blank_seen)`: the best
/// score, ties going to the earlier start. Expects `hyps` sorted by
/// `(node, blank_seen, start_frame)`.
fn beam_and_state_prune(hyps: &mut Vec<Hypothesis>, beam_thr: f64) {
    let best = hyps.iter().fold(0.0f64, |m, h| m.max(h.score));
    let floor = best - beam_thr;
    hyps.retain(|h| h.score >= floor);
    let mut w = 0;
    let mut i = 0;
    while i < hyps.len() {
        let key = (hyps[i].node, hyps[i].blank_seen);
        let mut keep = hyps[i];
        let mut j = i + 1;
        while j < hyps.len() && (hyps[j].node, hyps[j].blank_seen) == key {
            if hyps[j].score > keep.score {
                keep = hyps[j];
            }
            j += 1;
        }
        hyps[w] = keep;
        w += 1;
        i = j;
    }
    hyps.truncate(w);
}

fn prefer(a: &SpottedCandidate, b: &SpottedCandidate) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then_with(|| a.span().cmp(&b.span()))
        .then_with(|| b.word.cmp(&a.word))
        .then_with(|| b.start_frame.cmp(&a.start_frame))
        .then_with(|| b.entry_id.cmp(&a.entry_id))
}

/// Groups candidates into clusters of transitively overlapping intervals and
/// keeps the best of each cluster: highest score, then longer interval, then
/// lexicographically smaller word. Output is ordered by start frame.
pub fn find_best_hyps(candidates: &[SpottedCandidate]) -> Vec<SpottedCandidate> {
    let mut sorted: Vec<&SpottedCandidate> = candidates.iter().collect();
    sorted.sort_by(|a, b| {
        (a.start_frame, a.end_frame)
            .cmp(&(b.start_frame, b.end_frame))
            .then_with(|| prefer(b, a))
    });
    let mut out: Vec<SpottedCandidate> = Vec::new();
    let mut cluster_end = 0usize;
    let mut best: Option<&SpottedCandidate> = None;
    for c in sorted {
        match best {
            Some(b) if c.start_frame <= cluster_end => {
                cluster_end = cluster_end.max(c.end_frame);
                if prefer(c, b) == Ordering::Greater {
                    best = Some(c);
                }
            }
            _ => {
                if let Some(b) = best {
                    out.push(b.clone());
                }
                best = Some(c);
                cluster_end = c.end_frame;
            }
        }
    }
    out.extend(best.cloned());
    out
}
