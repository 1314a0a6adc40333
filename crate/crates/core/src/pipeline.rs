//! One-utterance decode: spot, resolve overlaps, greedy align, merge.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::SpotterConfig;
use crate::graph::ContextGraph;
use crate::greedy::{greedy_ctc_align, WordAlignment};
use crate::logprobs::LogProbMatrix;
use crate::merge::{merge_ctc, merge_transducer, MergeDecision, MergeResult};
use crate::spotter::{find_best_hyps, spot, SpotError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Ctc,
    Transducer,
}

#[derive(Debug, Clone)]
pub struct DecodedUtterance {
    /// Text before biasing: the greedy CTC transcript, or the Transducer one.
    pub baseline_text: String,
    pub ctc_alignment: WordAlignment,
    /// Every candidate the spotter reported, before overlap resolution.
    pub spotted: usize,
    pub merge: MergeResult,
    /// Spot, align and merge only.
    pub elapsed: Duration,
}

impl DecodedUtterance {
    pub fn merged_text(&self) -> &str {
        &self.merge.text
    }

    pub fn decisions(&self) -> &[MergeDecision] {
        &self.merge.decisions
    }
}

/// Decodes one utterance. With a Transducer alignment the candidates are
/// vetted on the CTC alignment and spliced into the Transducer words.
pub fn decode_utterance(
    logprobs: &LogProbMatrix,
    graph: &ContextGraph,
    cfg: &SpotterConfig,
    vocab: &crate::vocab::Vocabulary,
    transducer: Option<&WordAlignment>,
) -> Result<DecodedUtterance, SpotError> {
    let started = Instant::now();
    let candidates = spot(logprobs, graph, cfg)?;
    let best = find_best_hyps(&candidates);
    let ctc_alignment = greedy_ctc_align(logprobs, vocab, cfg.ctc_w);
    let (baseline_text, merge) = match transducer {
        None => (ctc_alignment.text(), merge_ctc(&ctc_alignment, &best)),
        Some(t) => (t.text(), merge_transducer(t, &ctc_alignment, &best)),
    };
    let elapsed = started.elapsed();
    Ok(DecodedUtterance {
        baseline_text,
        ctc_alignment,
        spotted: candidates.len(),
        merge,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BiasingEntry;
    use crate::synth::MatrixBuilder;
    use crate::vocab::Vocabulary;

    #[test]
    fn empty_graph_keeps_greedy_text() {
        let v = Vocabulary::new(["\u{2581}a", "b", "<b>"]).unwrap();
        let m = MatrixBuilder::new(3, 2)
            .token(0, 0.9, 2)
            .blank(0.9, 1)
            .token(1, 0.9, 1)
            .build()
            .unwrap();
        let g = ContextGraph::empty(&v);
        let d = decode_utterance(&m, &g, &SpotterConfig::default(), &v, None).unwrap();
        assert_eq!(d.baseline_text, "ab");
        assert_eq!(d.merged_text(), "ab");
        assert_eq!(d.spotted, 0);
    }

    #[test]
    fn dimension_mismatch() {
        let v = Vocabulary::new(["a", "<b>"]).unwrap();
        let g = ContextGraph::build(vec![BiasingEntry::new("a", vec![vec![0]], &v).unwrap()], &v).0;
        let m = LogProbMatrix::empty(3);
        assert!(decode_utterance(&m, &g, &SpotterConfig::default(), &v, None).is_err());
    }
}
