//! Splicing spotted candidates into greedy decoding output.

use serde::{Deserialize, Serialize};

use crate::greedy::{AlignedWord, WordAlignment};
use crate::spotter::SpottedCandidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub candidate: SpottedCandidate,
    /// Greedy words whose intervals intersect the candidate's.
    pub overlapped_words: Vec<AlignedWord>,
    /// Score the candidate had to beat: the overlapped words' scores, or the
    /// weighted blank mass of its interval when it overlaps no word.
    pub greedy_score_sum: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    pub text: String,
    pub decisions: Vec<MergeDecision>,
    /// The output words; accepted candidates carry their spotting score.
    pub alignment: WordAlignment,
}

/// Accepts each candidate whose score beats what it would replace in the
/// greedy CTC alignment and splices it in. Candidates must be pairwise
/// disjoint (as returned by [`find_best_hyps`](crate::spotter::find_best_hyps)).
pub fn merge_ctc(alignment: &WordAlignment, candidates: &[SpottedCandidate]) -> MergeResult {
    let decisions = decide(alignment, candidates);
    let merged = splice(alignment, &decisions);
    MergeResult {
        text: merged.text(),
        decisions,
        alignment: merged,
    }
}

/// Transducer variant: acceptance is decided on the CTC alignment only; each
/// accepted candidate then replaces whatever Transducer words it overlaps.
pub fn merge_transducer(
    transducer_ali: &WordAlignment,
    ctc_ali: &WordAlignment,
    candidates: &[SpottedCandidate],
) -> MergeResult {
    let decisions = decide(ctc_ali, candidates);
    let merged = splice(transducer_ali, &decisions);
    MergeResult {
        text: merged.text(),
        decisions,
        alignment: merged,
    }
}

fn decide(alignment: &WordAlignment, candidates: &[SpottedCandidate]) -> Vec<MergeDecision> {
    let mut ordered: Vec<&SpottedCandidate> = candidates.iter().collect();
    ordered.sort_by_key(|c| (c.start_frame, c.end_frame));
    ordered
        .into_iter()
        .map(|c| {
            let overlapped: Vec<AlignedWord> = alignment
                .words
                .iter()
                .filter(|w| w.overlaps(c.start_frame, c.end_frame))
                .cloned()
                .collect();
            let reference = if overlapped.is_empty() {
                alignment.blank_mass(c.start_frame, c.end_frame)
            } else {
                overlapped.iter().map(|w| w.score).sum()
            };
            MergeDecision {
                candidate: c.clone(),
                accepted: c.score > reference,
                overlapped_words: overlapped,
                greedy_score_sum: reference,
            }
        })
        .collect()
}

fn splice(base: &WordAlignment, decisions: &[MergeDecision]) -> WordAlignment {
    let accepted: Vec<&SpottedCandidate> = decisions
        .iter()
        .filter(|d| d.accepted)
        .map(|d| &d.candidate)
        .collect();
    let mut words: Vec<AlignedWord> = base
        .words
        .iter()
        .filter(|w| !accepted.iter().any(|c| w.overlaps(c.start_frame, c.end_frame)))
        .cloned()
        .collect();
    words.extend(accepted.iter().map(|c| AlignedWord {
        word: c.word.clone(),
        start_frame: c.start_frame,
        end_frame: c.end_frame,
        score: c.score,
    }));
    words.sort_by_key(|w| (w.start_frame, w.end_frame));
    WordAlignment {
        words,
        frames: base.frames,
        blank_scores: base.blank_scores.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(word: &str, s: usize, e: usize, score: f64) -> AlignedWord {
        AlignedWord {
            word: word.into(),
            start_frame: s,
            end_frame: e,
            score,
        }
    }

    fn c(word: &str, s: usize, e: usize, score: f64) -> SpottedCandidate {
        SpottedCandidate {
            entry_id: 0,
            word: word.into(),
            start_frame: s,
            end_frame: e,
            score,
        }
    }

    fn ali(words: Vec<AlignedWord>, frames: usize) -> WordAlignment {
        WordAlignment {
            words,
            frames,
            blank_scores: vec![-0.05; frames],
        }
    }

    #[test]
    fn no_candidates_is_identity() {
        let a = ali(vec![w("the", 0, 1, -0.2), w("cloud", 2, 6, -4.0)], 8);
        let r = merge_ctc(&a, &[]);
        assert_eq!(r.text, "the cloud");
        assert!(r.decisions.is_empty());
        assert_eq!(r.alignment.words, a.words);
    }

    #[test]
    fn false_accept_rejected() {
        let a = ali(vec![w("cloud", 2, 6, -4.0)], 8);
        let r = merge_ctc(&a, &[c("cuda", 2, 6, -6.0)]);
        assert_eq!(r.text, "cloud");
        assert!(!r.decisions[0].accepted);
        assert_eq!(r.decisions[0].greedy_score_sum, -4.0);
    }

    #[test]
    fn replaces_split_abbreviation() {
        let a = ali(
            vec![
                w("g", 0, 1, -1.0),
                w("p", 2, 3, -1.2),
                w("u", 4, 5, -1.1),
                w("is", 7, 8, -0.1),
            ],
            9,
        );
        let r = merge_ctc(&a, &[c("gpu", 0, 5, -2.0)]);
        assert_eq!(r.text, "gpu is");
        let d = &r.decisions[0];
        assert!(d.accepted);
        assert_eq!(d.overlapped_words.len(), 3);
        assert!((d.greedy_score_sum + 3.3).abs() < 1e-12);
    }

    #[test]
    fn zero_overlap_compares_against_blank_mass() {
        let a = ali(vec![w("a", 0, 0, -0.1), w("b", 9, 9, -0.1)], 10);
        // frames 3..=5 carry -0.15 of weighted blank mass
        let r = merge_ctc(&a, &[c("gpu", 3, 5, -0.1)]);
        assert!(r.decisions[0].accepted);
        assert_eq!(r.text, "a gpu b");
        let r = merge_ctc(&a, &[c("gpu", 3, 5, -0.2)]);
        assert!(!r.decisions[0].accepted);
        assert_eq!(r.text, "a b");
    }

    #[test]
    fn merging_twice_is_idempotent() {
        let a = ali(vec![w("g", 0, 1, -1.0), w("p", 2, 3, -1.2), w("x", 6, 7, -3.0)], 9);
        let cands = [c("gpu", 0, 3, -1.0), c("nvidia", 5, 8, 2.0)];
        let first = merge_ctc(&a, &cands);
        assert_eq!(first.text, "gpu nvidia");
        let accepted: Vec<SpottedCandidate> = first
            .decisions
            .iter()
            .filter(|d| d.accepted)
            .map(|d| d.candidate.clone())
            .collect();
        let second = merge_ctc(&first.alignment, &accepted);
        assert_eq!(second.text, first.text);
        assert!(second.decisions.iter().all(|d| !d.accepted));
    }

    #[test]
    fn transducer_filter_first() {
        let ctc = ali(vec![w("in", 3, 4, -0.5), w("video", 5, 7, -0.6)], 10);
        let rnnt = WordAlignment {
            words: vec![w("the", 0, 1, f64::NEG_INFINITY), w("invidia", 3, 7, f64::NEG_INFINITY)],
            frames: 10,
            blank_scores: Vec::new(),
        };
        assert_eq!(merge_transducer(&rnnt, &ctc, &[]).text, "the invidia");
        let rejected = merge_transducer(&rnnt, &ctc, &[c("nvidia", 3, 7, -2.0)]);
        assert_eq!(rejected.text, "the invidia");
        let accepted = merge_transducer(&rnnt, &ctc, &[c("nvidia", 3, 7, 1.0)]);
        assert_eq!(accepted.text, "the nvidia");
        assert_eq!(accepted.decisions[0].overlapped_words.len(), 2);
    }
}
