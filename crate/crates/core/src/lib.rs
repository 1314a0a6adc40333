//! Context biasing for CTC and Transducer speech recognition by CTC-based
//! word spotting.
//!
//! A [`ContextGraph`] (a token trie of biasing words) is searched
//! frame-synchronously over a CTC log-probability matrix by [`spot`]. The
//! best non-overlapping detections from [`find_best_hyps`] replace words of
//! the greedy decoding ([`greedy_ctc_align`]) when they score higher
//! ([`merge_ctc`], [`merge_transducer`]).

pub mod alts;
pub mod config;
pub mod graph;
pub mod greedy;
pub mod logprobs;
pub mod manifest;
pub mod merge;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod spotter;
pub mod synth;
pub mod tokenize;
pub mod vocab;

pub use alts::{expand_entries, ContextItem, WordCostDictionary};
pub use config::SpotterConfig;
pub use graph::{BiasingEntry, ContextGraph, EntryId, NodeId};
pub use greedy::{greedy_ctc_align, load_transducer_alignment, AlignedWord, WordAlignment};
pub use logprobs::LogProbMatrix;
pub use manifest::{load_manifest, UtteranceRecord};
pub use merge::{merge_ctc, merge_transducer, MergeDecision, MergeResult};
pub use metrics::{EvalReport, Evaluator};
pub use pipeline::{decode_utterance, DecodeMode, DecodedUtterance};
pub use spotter::{find_best_hyps, spot, SpottedCandidate};
pub use tokenize::tokenize;
pub use vocab::{TokenId, Vocabulary, WordBoundary};
