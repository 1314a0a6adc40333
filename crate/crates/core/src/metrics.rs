//! WER, per-biasing-word precision/recall/F-score, and biasing-list mining.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum EditOp {
    Match { r: usize, h: usize },
    Substitution { r: usize, h: usize },
    Deletion { r: usize },
    Insertion { h: usize },
}

/// Minimal Levenshtein alignment of two word sequences. Among equal-cost
/// alignments, each step from the left prefers match, then substitution,
/// then deletion, then insertion.
pub fn align_words<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Vec<EditOp> {
    let (n, m) = (reference.len(), hypothesis.len());
    let eq = |i: usize, j: usize| reference[i].as_ref() == hypothesis[j].as_ref();
    // d[i][j]: distance between reference[i..] and hypothesis[j..]
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in (0..=n).rev() {
        for j in (0..=m).rev() {
            d[i * w + j] = if i == n {
                m - j
            } else if j == m {
                n - i
            } else {
                let diag = d[(i + 1) * w + j + 1] + usize::from(!eq(i, j));
                diag.min(d[(i + 1) * w + j] + 1).min(d[i * w + j + 1] + 1)
            };
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        let here = d[i * w + j];
        if i < n && j < m {
            let same = eq(i, j);
            if here == d[(i + 1) * w + j + 1] + usize::from(!same) {
                ops.push(if same {
                    EditOp::Match { r: i, h: j }
                } else {
                    EditOp::Substitution { r: i, h: j }
                });
                i += 1;
                j += 1;
                continue;
            }
        }
        if i < n && here == d[(i + 1) * w + j] + 1 {
            ops.push(EditOp::Deletion { r: i });
            i += 1;
        } else {
            ops.push(EditOp::Insertion { h: j });
            j += 1;
        }
    }
    ops
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl ErrorCounts {
    pub fn from_ops(ops: &[EditOp]) -> Self {
        let mut c = Self::default();
        for op in ops {
            match op {
                EditOp::Match { .. } => c.reference_len += 1,
                EditOp::Substitution { .. } => {
                    c.substitutions += 1;
                    c.reference_len += 1;
                }
                EditOp::Deletion { .. } => {
                    c.deletions += 1;
                    c.reference_len += 1;
                }
                EditOp::Insertion { .. } => c.insertions += 1,
            }
        }
        c
    }

    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Percent. With an empty reference the denominator is clamped to one;
    /// see [`ErrorCounts::empty_reference`].
    pub fn wer(&self) -> f64 {
        if self.reference_len == 0 && self.errors() == 0 {
            return 0.0;
        }
        100.0 * self.errors() as f64 / self.reference_len.max(1) as f64
    }

    /// Set when the WER had to be computed against an empty reference.
    pub fn empty_reference(&self) -> bool {
        self.reference_len == 0 && self.insertions > 0
    }

    pub fn add(&mut self, other: &ErrorCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.reference_len += other.reference_len;
    }
}

pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> f64 {
    ErrorCounts::from_ops(&align_words(reference, hypothesis)).wer()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl WordCounts {
    pub fn add(&mut self, o: &WordCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
}

impl Prf {
    pub fn from_counts(c: &WordCounts) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self::from_pr(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let fscore = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            fscore,
        }
    }
}

/// Per-word occurrence counts for biasing words. A matched pair is a true
/// positive; a biasing word on the reference side of any other operation is
/// a miss, on the hypothesis side a false alarm.
pub fn score_context_words<S: AsRef<str>>(
    ops: &[EditOp],
    reference: &[S],
    hypothesis: &[S],
    biasing_words: &BTreeSet<String>,
) -> BTreeMap<String, WordCounts> {
    let mut out: BTreeMap<String, WordCounts> = BTreeMap::new();
    let is_bias = |w: &str| biasing_words.contains(w);
    let mut bump = |w: &str, f: fn(&mut WordCounts)| f(out.entry(w.to_string()).or_default());
    for op in ops {
        match *op {
            EditOp::Match { r, .. } => {
                let word = reference[r].as_ref();
                if is_bias(word) {
                    bump(word, |c| c.tp += 1);
                }
            }
            EditOp::Substitution { r, h } => {
                let (rw, hw) = (reference[r].as_ref(), hypothesis[h].as_ref());
                if is_bias(rw) {
                    bump(rw, |c| c.fn_ += 1);
                }
                if is_bias(hw) {
                    bump(hw, |c| c.fp += 1);
                }
            }
            EditOp::Deletion { r } => {
                let rw = reference[r].as_ref();
                if is_bias(rw) {
                    bump(rw, |c| c.fn_ += 1);
                }
            }
            EditOp::Insertion { h } => {
                let hw = hypothesis[h].as_ref();
                if is_bias(hw) {
                    bump(hw, |c| c.fp += 1);
                }
            }
        }
    }
    out
}

/// Joins occurrences of multi-word phrases into single tokens, longest
/// phrase first, scanning left to right.
pub fn fuse_phrases(words: &[String], phrases: &[Vec<String>]) -> Vec<String> {
    let mut sorted: Vec<&Vec<String>> = phrases.iter().filter(|p| p.len() > 1).collect();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.len()));
    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    'outer: while i < words.len() {
        for p in &sorted {
            if words[i..].starts_with(p) {
                out.push(p.join(" "));
                i += p.len();
                continue 'outer;
            }
        }
        out.push(words[i].clone());
        i += 1;
    }
    out
}

/// Corpus-level evaluation of one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    /// Percent.
    pub wer: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub per_word: BTreeMap<String, WordCounts>,
    pub decode_seconds: f64,
    pub utterances: usize,
    pub errors: ErrorCounts,
    /// Utterances whose reference was empty while the hypothesis was not.
    pub empty_reference_utterances: usize,
}

/// Accumulates utterance-level counts; order of `add` calls does not matter.
#[derive(Debug, Clone, Default)]
pub struct Evaluator {
    biasing_words: BTreeSet<String>,
    phrases: Vec<Vec<String>>,
    counts: ErrorCounts,
    per_word: BTreeMap<String, WordCounts>,
    utterances: usize,
    flagged: usize,
}

impl Evaluator {
    pub fn new<I, S>(biasing_words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let biasing_words: BTreeSet<String> = biasing_words
            .into_iter()
            .map(|w| w.as_ref().split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|w| !w.is_empty())
            .collect();
        let phrases = biasing_words
            .iter()
            .map(|w| w.split(' ').map(str::to_string).collect::<Vec<_>>())
            .filter(|p| p.len() > 1)
            .collect();
        Self {
            biasing_words,
            phrases,
            ..Default::default()
        }
    }

    pub fn add(&mut self, reference: &str, hypothesis: &str) {
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let (rw, hw) = (split(reference), split(hypothesis));
        let counts = ErrorCounts::from_ops(&align_words(&rw, &hw));
        if counts.empty_reference() {
            self.flagged += 1;
        }
        self.counts.add(&counts);

        let rf = fuse_phrases(&rw, &self.phrases);
        let hf = fuse_phrases(&hw, &self.phrases);
        let ops = align_words(&rf, &hf);
        for (w, c) in score_context_words(&ops, &rf, &hf, &self.biasing_words) {
            self.per_word.entry(w).or_default().add(&c);
        }
        self.utterances += 1;
    }

    pub fn totals(&self) -> WordCounts {
        let mut t = WordCounts::default();
        for c in self.per_word.values() {
            t.add(c);
        }
        t
    }

    pub fn finish(&self, decode_seconds: f64) -> EvalReport {
        let prf = Prf::from_counts(&self.totals());
        EvalReport {
            wer: self.counts.wer(),
            precision: prf.precision,
            recall: prf.recall,
            fscore: prf.fscore,
            per_word: self.per_word.clone(),
            decode_seconds,
            utterances: self.utterances,
            errors: self.counts,
            empty_reference_utterances: self.flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinedTerm {
    pub text: String,
    pub frequency: usize,
    pub accuracy: f64,
}

pub const DEFAULT_MIN_LEN: usize = 3;
pub const DEFAULT_MAX_ACCURACY: f64 = 0.5;

/// Reference unigrams and adjacent bigrams that greedy decoding recognizes
/// poorly, most frequent first. A unigram counts as recognized when aligned
/// as a match; a bigram when both words match adjacent hypothesis words.
pub fn mine_biasing_list(
    pairs: &[(String, String)],
    min_len: usize,
    max_accuracy: f64,
) -> Vec<MinedTerm> {
    let mut stats: HashMap<String, (usize, usize)> = HashMap::new();
    for (reference, hypothesis) in pairs {
        let rw: Vec<&str> = reference.split_whitespace().collect();
        let hw: Vec<&str> = hypothesis.split_whitespace().collect();
        let mut matched: Vec<Option<usize>> = vec![None; rw.len()];
        for op in align_words(&rw, &hw) {
            if let EditOp::Match { r, h } = op {
                matched[r] = Some(h);
            }
        }
        for (i, w) in rw.iter().enumerate() {
            let e = stats.entry((*w).to_string()).or_default();
            e.0 += 1;
            e.1 += usize::from(matched[i].is_some());
        }
        for i in 1..rw.len() {
            let e = stats.entry(format!("{} {}", rw[i - 1], rw[i])).or_default();
            e.0 += 1;
            let ok = matches!((matched[i - 1], matched[i]), (Some(a), Some(b)) if b == a + 1);
            e.1 += usize::from(ok);
        }
    }
    let mut out: Vec<MinedTerm> = stats
        .into_iter()
        .map(|(text, (freq, hits))| MinedTerm {
            accuracy: hits as f64 / freq as f64,
            frequency: freq,
            text,
        })
        .filter(|t| t.text.chars().count() >= min_len && t.accuracy <= max_accuracy)
        .collect();
    out.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.text.cmp(&b.text)));
    out
}
