//! Alternative spellings for biasing entries: character spellings for short
//! words (likely abbreviations), dictionary-driven splits of compound words,
//! and user-provided alternatives.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Read};

use log::warn;
use thiserror::Error;

use crate::graph::{normalize_canonical, BiasingEntry, GraphError};
use crate::tokenize::{tokenize_spelling, TokenizeError, PRETOKENIZED_PREFIX};
use crate::vocab::Vocabulary;

/// Words up to this many characters also get a spelled-out variant.
pub const ABBREVIATION_MAX_LEN: usize = 4;
/// Shortest word considered for compound splitting.
pub const COMPOUND_MIN_LEN: usize = 3;
/// Shortest piece a compound may be split into.
pub const COMPOUND_MIN_PIECE: usize = 2;

#[derive(Debug, Error)]
pub enum AltsError {
    #[error("input is not valid UTF-8")]
    Utf8(#[from] std::string::FromUtf8Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Zipf-style word costs from a frequency-ranked word list:
/// `cost(w) = ln((rank + 1) * ln(N))`.
#[derive(Debug, Clone, Default)]
pub struct WordCostDictionary {
    words: Vec<String>,
    costs: HashMap<String, f64>,
    max_len: usize,
}

impl WordCostDictionary {
    /// Ranks follow input order; repeated words keep their first rank.
    pub fn from_ranked<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ranked: Vec<String> = Vec::new();
        let mut costs = HashMap::new();
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() || costs.contains_key(&w) {
                continue;
            }
            costs.insert(w.clone(), 0.0);
            ranked.push(w);
        }
        // ln(N) is clamped at N = 3 so every cost stays positive.
        let log_n = (ranked.len().max(3) as f64).ln();
        for (rank, w) in ranked.iter().enumerate() {
            costs.insert(w.clone(), (((rank + 1) as f64) * log_n).ln());
        }
        let max_len = ranked.iter().map(|w| w.chars().count()).max().unwrap_or(0);
        Self {
            words: ranked,
            costs,
            max_len,
        }
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self, AltsError> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        let text = String::from_utf8(buf)?;
        Ok(Self::from_ranked(text.lines()))
    }

    /// Infinite for unknown words.
    pub fn cost(&self, word: &str) -> f64 {
        self.costs.get(word).copied().unwrap_or(f64::INFINITY)
    }

    pub fn rank(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

fn is_plain_word(word: &str) -> bool {
    !word.is_empty() && word.chars().all(char::is_alphabetic)
}

/// `"gpu"` becomes `"g p u"`; words longer than four characters get nothing.
pub fn abbreviation_variant(word: &str) -> Option<String> {
    if !is_plain_word(word) || word.chars().count() > ABBREVIATION_MAX_LEN {
        return None;
    }
    Some(
        word.chars()
            .map(String::from)
            .collect::<Vec<_>>()
            .join(" "),
    )
}

/// Minimal-cost split into at least two dictionary words of two or more
/// characters each. Returned only when it is cheaper than the word itself.
pub fn compound_split(word: &str, dict: &WordCostDictionary) -> Option<String> {
    if !is_plain_word(word) {
        return None;
    }
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    if n < COMPOUND_MIN_LEN {
        return None;
    }
    let piece = |a: usize, b: usize| chars[a..b].iter().collect::<String>();
    // single[i]: word[..i] as one piece; multi[i]: word[..i] as >= 2 pieces.
    let mut single = vec![f64::INFINITY; n + 1];
    let mut multi: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); n + 1];
    for i in COMPOUND_MIN_PIECE..=n {
        single[i] = dict.cost(&piece(0, i));
        let lo = i.saturating_sub(dict.max_len).max(COMPOUND_MIN_PIECE);
        for j in lo..=i - COMPOUND_MIN_PIECE {
            let prefix = single[j].min(multi[j].0);
            if !prefix.is_finite() {
                continue;
            }
            let c = prefix + dict.cost(&piece(j, i));
            if c < multi[i].0 {
                multi[i] = (c, j);
            }
        }
    }
    let (best, _) = multi[n];
    if !best.is_finite() || best >= dict.cost(word) {
        return None;
    }
    let mut pieces = Vec::new();
    let mut end = n;
    loop {
        let j = multi[end].1;
        pieces.push(piece(j, end));
        end = j;
        if single[end] <= multi[end].0 {
            pieces.push(piece(0, end));
            break;
        }
    }
    pieces.reverse();
    Some(pieces.join(" "))
}

/// One context-list line: the canonical form plus listed spellings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextItem {
    pub canonical: String,
    pub alternatives: Vec<String>,
}

impl From<&str> for ContextItem {
    fn from(word: &str) -> Self {
        Self {
            canonical: normalize_canonical(word),
            alternatives: Vec::new(),
        }
    }
}

/// Surface spellings are normalized like canonical forms; pre-tokenized ones
/// keep their token case.
fn normalize_spelling(s: &str) -> String {
    match s.trim().strip_prefix(PRETOKENIZED_PREFIX) {
        Some(tokens) => format!(
            "{PRETOKENIZED_PREFIX}{}",
            tokens.split_whitespace().collect::<Vec<_>>().join(" ")
        ),
        None => normalize_canonical(s),
    }
}

/// Parses `canonical[TAB alt]*` lines. `#` starts a comment line; a repeated
/// canonical form merges into the first occurrence.
pub fn parse_context_list<R: BufRead>(source: R) -> Result<Vec<ContextItem>, AltsError> {
    let mut items: Vec<ContextItem> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for line in source.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let canonical = normalize_canonical(fields.next().unwrap_or(""));
        if canonical.is_empty() {
            continue;
        }
        let alts: Vec<String> = fields
            .map(normalize_spelling)
            .filter(|a| !a.is_empty())
            .collect();
        match index.get(&canonical) {
            Some(&i) => {
                for a in alts {
                    if !items[i].alternatives.contains(&a) {
                        items[i].alternatives.push(a);
                    }
                }
            }
            None => {
                index.insert(canonical.clone(), items.len());
                items.push(ContextItem {
                    canonical,
                    alternatives: alts,
                });
            }
        }
    }
    Ok(items)
}

/// Manual alternatives file: `word[TAB alt]+`.
pub fn parse_manual_alts<R: BufRead>(
    source: R,
) -> Result<BTreeMap<String, Vec<String>>, AltsError> {
    Ok(parse_context_list(source)?
        .into_iter()
        .map(|i| (i.canonical, i.alternatives))
        .collect())
}

/// Every surface spelling of `item`, canonical first, without duplicates.
pub fn alternative_spellings(
    item: &ContextItem,
    dict: Option<&WordCostDictionary>,
    manual: &BTreeMap<String, Vec<String>>,
    auto_alts: bool,
) -> Vec<String> {
    let mut out = vec![item.canonical.clone()];
    let push = |s: String, out: &mut Vec<String>| {
        if !s.is_empty() && !out.contains(&s) {
            out.push(s);
        }
    };
    for a in &item.alternatives {
        push(a.clone(), &mut out);
    }
    if auto_alts {
        if let Some(a) = abbreviation_variant(&item.canonical) {
            push(a, &mut out);
        }
        if let Some(c) = dict.and_then(|d| compound_split(&item.canonical, d)) {
            push(c, &mut out);
        }
    }
    if let Some(m) = manual.get(&item.canonical) {
        for a in m {
            push(normalize_spelling(a), &mut out);
        }
    }
    out
}

#[derive(Debug)]
pub enum ExpandWarning {
    /// One spelling could not be tokenized; the entry keeps its others.
    SkippedSpelling {
        word: String,
        spelling: String,
        error: TokenizeError,
    },
    /// No spelling of the word could be tokenized.
    DroppedEntry { word: String, error: TokenizeError },
    Invalid { word: String, error: GraphError },
}

/// Expands context items into biasing entries with tokenized spellings.
pub fn expand_entries(
    items: &[ContextItem],
    dict: Option<&WordCostDictionary>,
    manual: &BTreeMap<String, Vec<String>>,
    vocab: &Vocabulary,
    auto_alts: bool,
) -> (Vec<BiasingEntry>, Vec<ExpandWarning>) {
    let mut entries = Vec::with_capacity(items.len());
    let mut warnings = Vec::new();
    for item in items {
        let mut transcriptions = Vec::new();
        let mut first_error = None;
        for spelling in alternative_spellings(item, dict, manual, auto_alts) {
            match tokenize_spelling(&spelling, vocab) {
                Ok(ids) => {
                    if !transcriptions.contains(&ids) {
                        transcriptions.push(ids);
                    }
                }
                Err(error) => {
                    warn!("skipping spelling {spelling:?} of {:?}: {error}", item.canonical);
                    if first_error.is_none() {
                        first_error = Some(error.clone());
                    }
                    warnings.push(ExpandWarning::SkippedSpelling {
                        word: item.canonical.clone(),
                        spelling,
                        error,
                    });
                }
            }
        }
        if transcriptions.is_empty() {
            warnings.push(ExpandWarning::DroppedEntry {
                word: item.canonical.clone(),
                error: first_error.unwrap_or(TokenizeError::EmptyInput),
            });
            continue;
        }
        match BiasingEntry::new(&item.canonical, transcriptions, vocab) {
            Ok(e) => entries.push(e),
            Err(error) => warnings.push(ExpandWarning::Invalid {
                word: item.canonical.clone(),
                error,
            }),
        }
    }
    (entries, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict() -> WordCostDictionary {
        WordCostDictionary::from_ranked([
            "the", "scale", "of", "hyper", "tensor", "rt", "core", "a", "in", "video",
        ])
    }

    #[test]
    fn abbreviations() {
        assert_eq!(abbreviation_variant("gpu").as_deref(), Some("g p u"));
        assert_eq!(abbreviation_variant("rtx").as_deref(), Some("r t x"));
        assert_eq!(abbreviation_variant("omniverse"), None);
        assert_eq!(abbreviation_variant("dlss").as_deref(), Some("d l s s"));
        assert_eq!(abbreviation_variant("tensor core"), None);
    }

    #[test]
    fn compounds() {
        let d = dict();
        assert_eq!(compound_split("hyperscale", &d).as_deref(), Some("hyper scale"));
        assert_eq!(compound_split("tensorrt", &d).as_deref(), Some("tensor rt"));
        assert_eq!(d.rank("scale"), Some(1));
        let d0 = WordCostDictionary::from_ranked(["scale", "sc", "ale", "sca", "le"]);
        assert_eq!(compound_split("scale", &d0), None);
        // single-letter pieces are never produced
        assert_eq!(compound_split("ain", &d), None);
        assert_eq!(compound_split("nvidia", &d), None);
    }

    #[test]
    fn costs_increase_with_rank() {
        let d = dict();
        let costs: Vec<f64> = ["the", "scale", "of", "hyper"].iter().map(|w| d.cost(w)).collect();
        assert!(costs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d.cost("zzz"), f64::INFINITY);
        assert!((d.cost("the") - (10f64.ln()).ln()).abs() < 1e-12);
    }

    #[test]
    fn context_list_parsing() {
        let text = "# comment\nNVIDIA\tin video\n\ngpu\ngpu\tg p u\ntensor core\n";
        let items = parse_context_list(text.as_bytes()).unwrap();
        assert_eq!(items.len(), 3);
        assert_eq!(items[0].canonical, "nvidia");
        assert_eq!(items[0].alternatives, vec!["in video"]);
        assert_eq!(items[1].alternatives, vec!["g p u"]);
        assert_eq!(items[2].canonical, "tensor core");
    }

    fn bpe_vocab() -> Vocabulary {
        let toks = [
            "\u{2581}g", "p", "u", "\u{2581}p", "\u{2581}u", "\u{2581}n", "v", "i", "d", "a",
            "\u{2581}in", "\u{2581}vi", "deo", "e", "f", "o", "r", "c", "\u{2581}f", "<b>",
        ];
        Vocabulary::new(toks).unwrap()
    }

    #[test]
    fn expand_gpu() {
        let v = bpe_vocab();
        let (entries, warnings) =
            expand_entries(&["gpu".into()], None, &BTreeMap::new(), &v, true);
        assert!(warnings.is_empty());
        assert_eq!(entries[0].transcriptions.len(), 2);
        assert_eq!(entries[0].transcriptions[1], vec![0, 3, 4]);
    }

    #[test]
    fn expand_manual_alts() {
        let v = bpe_vocab();
        let mut manual = BTreeMap::new();
        manual.insert("nvidia".to_string(), vec!["in video".to_string()]);
        manual.insert("geforce".to_string(), vec!["g force".to_string()]);
        let items: Vec<ContextItem> = vec!["nvidia".into(), "geforce".into()];
        let (entries, warnings) = expand_entries(&items, None, &manual, &v, true);
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(entries[0].transcriptions.len(), 2);
        let spellings = alternative_spellings(&items[1], None, &manual, true);
        assert_eq!(spellings, vec!["geforce", "g force"]);
        assert_eq!(entries[1].transcriptions.len(), 2);
    }

    #[test]
    fn pretokenized_alternative_keeps_case() {
        let v = Vocabulary::new(["\u{2581}gp", "u", "\u{2581}G", "P", "U", "<b>"]).unwrap();
        let items = parse_context_list("gpu\ttokens:\u{2581}G  P U\n".as_bytes()).unwrap();
        assert_eq!(items[0].alternatives, vec!["tokens:\u{2581}G P U"]);
        let (entries, warnings) = expand_entries(&items, None, &BTreeMap::new(), &v, false);
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(entries[0].transcriptions, vec![vec![0, 1], vec![2, 3, 4]]);
    }

    #[test]
    fn unsegmentable_alternative_is_skipped() {
        let v = Vocabulary::new(["\u{2581}gp", "u", "<b>"]).unwrap();
        let (entries, warnings) =
            expand_entries(&["gpu".into(), "zzz".into()], None, &BTreeMap::new(), &v, true);
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].transcriptions, vec![vec![0, 1]]);
        assert!(warnings
            .iter()
            .any(|w| matches!(w, ExpandWarning::SkippedSpelling { spelling, .. } if spelling == "g p u")));
        assert!(warnings
            .iter()
            .any(|w| matches!(w, ExpandWarning::DroppedEntry { word, .. } if word == "zzz")));
    }

    #[test]
    fn no_auto_alts() {
        let v = bpe_vocab();
        let (entries, _) = expand_entries(&["gpu".into()], None, &BTreeMap::new(), &v, false);
        assert_eq!(entries[0].transcriptions.len(), 1);
    }

    proptest! {
        #[test]
        fn abbreviation_shape(w in "[a-z]{1,8}") {
            let n = w.chars().count();
            match abbreviation_variant(&w) {
                Some(a) => {
                    prop_assert!(n <= 4);
                    prop_assert_eq!(a.chars().count(), 2 * n - 1);
                }
                None => prop_assert!(n > 4),
            }
        }

        #[test]
        fn compound_pieces_rejoin(
            words in proptest::collection::vec("[a-z]{2,5}", 2..8),
            picks in proptest::collection::vec(0usize..8, 2..4),
        ) {
            let d = WordCostDictionary::from_ranked(&words);
            let w: String = picks.iter().map(|&i| words[i % words.len()].as_str()).collect();
            if let Some(split) = compound_split(&w, &d) {
                prop_assert_eq!(split.replace(' ', ""), w.clone());
                let pieces: Vec<&str> = split.split(' ').collect();
                prop_assert!(pieces.len() >= 2);
                prop_assert!(pieces.iter().all(|p| p.chars().count() >= 2 && d.cost(p).is_finite()));
                let total: f64 = pieces.iter().map(|p| d.cost(p)).sum();
                prop_assert!(total < d.cost(&w));
            }
        }
    }
}
