//! Slow reference implementations for cross-checking the decoder: exhaustive
//! CTC path enumeration and an independent greedy decode. Not used on the
//! decode path.

use crate::logprobs::LogProbMatrix;
use crate::vocab::{TokenId, Vocabulary, WordBoundary};

/// Longest interval [`valid_paths`] will enumerate.
pub const MAX_ORACLE_FRAMES: usize = 10;

/// Removes consecutive duplicates, then blanks.
pub fn collapse(path: &[TokenId], blank: TokenId) -> Vec<TokenId> {
    let mut out = Vec::new();
    let mut prev = None;
    for &tok in path {
        if prev != Some(tok) && tok != blank {
            out.push(tok);
        }
        prev = Some(tok);
    }
    out
}

/// Shortest path length that collapses to `labels`.
pub fn min_path_len(labels: &[TokenId]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Every length-`len` path that collapses to `labels`, starts by emitting the
/// first label and ends by emitting the last one. Enumerates all sequences
/// over `{blank} ∪ labels`.
pub fn valid_paths(len: usize, labels: &[TokenId], blank: TokenId) -> Vec<Vec<TokenId>> {
    assert!(len <= MAX_ORACLE_FRAMES, "oracle limited to {MAX_ORACLE_FRAMES} frames");
    assert!(!labels.is_empty());
    let mut alphabet: Vec<TokenId> = labels.to_vec();
    alphabet.push(blank);
    alphabet.sort_unstable();
    alphabet.dedup();
    let k = alphabet.len();
    let total = k.pow(len as u32);
    let mut out = Vec::new();
    let mut path = vec![0; len];
    for mut code in 0..total {
        for slot in path.iter_mut() {
            *slot = alphabet[code % k];
            code /= k;
        }
        if path.first() == labels.first()
            && path.last() == labels.last()
            && collapse(&path, blank) == labels
        {
            out.push(path.clone());
        }
    }
    out
}

/// Number of valid paths via the CTC trellis (blank-interleaved labels),
/// with the same first and last frame constraints as [`valid_paths`].
pub fn trellis_path_count(len: usize, labels: &[TokenId]) -> u64 {
    if len == 0 || labels.is_empty() {
        return 0;
    }
    // states: 0 = blank, 1 = labels[0], 2 = blank, 3 = labels[1], ...
    let n = 2 * labels.len() + 1;
    let label_at = |s: usize| (s % 2 == 1).then(|| labels[s / 2]);
    let mut cur = vec![0u64; n];
    cur[1] = 1;
    for _ in 1..len {
        let mut nxt = vec![0u64; n];
        for s in 0..n {
            let mut c = cur[s];
            if s >= 1 {
                c += cur[s - 1];
            }
            if s >= 2 && label_at(s).is_some() && label_at(s) != label_at(s - 2) {
                c += cur[s - 2];
            }
            nxt[s] = c;
        }
        cur = nxt;
    }
    cur[n - 2]
}

pub fn path_score(
    logprobs: &LogProbMatrix,
    start: usize,
    path: &[TokenId],
    blank: TokenId,
    cb_w: f64,
) -> f64 {
    path.iter()
        .enumerate()
        .map(|(i, &tok)| {
            let bonus = if tok == blank { 0.0 } else { cb_w };
            logprobs.get(start + i, tok) + bonus
        })
        .sum()
}

/// Best score of a path over frames `start..=end` that spells `labels`,
/// emitting the first label on `start` and the last on `end`. Each non-blank
/// frame earns `cb_w`. `None` when no such path exists.
pub fn best_path_score(
    logprobs: &LogProbMatrix,
    start: usize,
    end: usize,
    labels: &[TokenId],
    blank: TokenId,
    cb_w: f64,
) -> Option<f64> {
    assert!(start <= end && end < logprobs.frames());
    let len = end - start + 1;
    if len < min_path_len(labels) {
        return None;
    }
    valid_paths(len, labels, blank)
        .iter()
        .map(|p| path_score(logprobs, start, p, blank, cb_w))
        .filter(|s| s.is_finite())
        .max_by(f64::total_cmp)
}

/// Per-frame argmax (first maximum wins), collapsed, blanks removed, and the
/// token strings joined into text.
pub fn reference_greedy_decode(logprobs: &LogProbMatrix, vocab: &Vocabulary) -> (Vec<TokenId>, String) {
    let best: Vec<TokenId> = (0..logprobs.frames())
        .map(|t| {
            let row = logprobs.row(t);
            let mut arg = 0;
            for i in 0..row.len() {
                if row[i] > row[arg] {
                    arg = i;
                }
            }
            arg as TokenId
        })
        .collect();
    let tokens = collapse(&best, vocab.blank_id());
    let joined: String = tokens.iter().map(|&t| vocab.token(t).unwrap_or("")).collect();
    let spaced = match vocab.boundary() {
        WordBoundary::Prefix(marker) | WordBoundary::Delimiter(marker) => joined.replace(marker.as_str(), " "),
    };
    let text = spaced.split_whitespace().collect::<Vec<_>>().join(" ");
    (tokens, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f32]]) -> LogProbMatrix {
        LogProbMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[0, 0, 2, 0], 2), vec![0, 0]);
        assert_eq!(collapse(&[0, 0, 1, 1], 2), vec![0, 1]);
        assert!(collapse(&[2, 2], 2).is_empty());
    }

    #[test]
    fn repeated_label_needs_a_blank() {
        let paths = valid_paths(3, &[0, 0], 2);
        assert_eq!(paths, vec![vec![0, 2, 0]]);
        let m = matrix(&[&[-0.1, -3.0, -2.5], &[-1.0, -2.0, -0.5], &[-0.2, -3.0, -1.8]]);
        let s = best_path_score(&m, 0, 2, &[0, 0], 2, 1.5).unwrap();
        assert!((s - (-0.1 - 0.5 - 0.2 + 3.0)).abs() < 1e-6);
        assert!(best_path_score(&m, 0, 1, &[0, 0], 2, 1.5).is_none());
    }

    #[test]
    fn single_frame() {
        let m = matrix(&[&[-0.7, -0.9, -2.0]]);
        let s = best_path_score(&m, 0, 0, &[1], 2, 3.0).unwrap();
        assert!((s - (-0.9 + 3.0)).abs() < 1e-6);
    }

    #[test]
    fn counts_agree_with_trellis() {
        let label_sets: [&[TokenId]; 6] = [&[0], &[0, 1], &[0, 0], &[0, 1, 0], &[1, 1, 1], &[0, 1, 2]];
        for labels in label_sets {
            for len in 1..=6 {
                let n = valid_paths(len, labels, 3).len() as u64;
                assert_eq!(n, trellis_path_count(len, labels), "{labels:?} len {len}");
            }
        }
    }

    #[test]
    fn greedy_examples() {
        let v = Vocabulary::new(["a", "b", "\u{2205}"]).unwrap();
        let a: &[f32] = &[-0.1, -5.0, -5.0];
        let blank: &[f32] = &[-5.0, -5.0, -0.1];
        let m = matrix(&[blank, blank, blank]);
        assert_eq!(reference_greedy_decode(&m, &v).1, "");
        let m = matrix(&[a, a, blank, a]);
        let (toks, text) = reference_greedy_decode(&m, &v);
        assert_eq!(toks, vec![0, 0]);
        assert_eq!(text, "aa");
    }
}
