//! Context graph: a token prefix tree over the biasing entries.
//!
//! Only the trie is stored. The CTC topology on top of it (token self-loops,
//! blank self-loops, the repeated-label rule) is applied on the fly by the
//! spotter, since those arcs are identical at every node.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

use crate::vocab::{TokenId, Vocabulary};

pub type NodeId = u32;
pub type EntryId = u32;

pub const ROOT: NodeId = 0;

const GRAPH_MAGIC: &[u8; 4] = b"CTCG";
const GRAPH_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("entry {0:?} has an empty canonical form")]
    EmptyCanonical(String),
    #[error("entry {0:?} has no transcriptions")]
    NoTranscriptions(String),
    #[error("entry {0:?} has an empty transcription")]
    EmptyTranscription(String),
    #[error("entry {word:?} uses token {token} which is outside the vocabulary (size {size})")]
    TokenOutOfRange { word: String, token: TokenId, size: usize },
    #[error("entry {0:?} contains the blank token")]
    BlankInTranscription(String),
    #[error("bad graph file magic")]
    BadMagic,
    #[error("unsupported graph file version {0}")]
    UnsupportedVersion(u8),
    #[error("graph was built against a different vocabulary")]
    VocabMismatch,
    #[error("truncated graph file")]
    Truncated,
    #[error("graph file contains invalid UTF-8")]
    Utf8,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A word or phrase to bias towards, with all of its token spellings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasingEntry {
    pub canonical: String,
    pub transcriptions: Vec<Vec<TokenId>>,
}

impl BiasingEntry {
    /// Normalizes the canonical form (lowercase, single spaces) and checks
    /// every transcription against the vocabulary.
    pub fn new(
        canonical: &str,
        transcriptions: Vec<Vec<TokenId>>,
        vocab: &Vocabulary,
    ) -> Result<Self, GraphError> {
        let canonical = normalize_canonical(canonical);
        if canonical.is_empty() {
            return Err(GraphError::EmptyCanonical(canonical));
        }
        if transcriptions.is_empty() {
            return Err(GraphError::NoTranscriptions(canonical));
        }
        let mut uniq: Vec<Vec<TokenId>> = Vec::with_capacity(transcriptions.len());
        for tr in transcriptions {
            if tr.is_empty() {
                return Err(GraphError::EmptyTranscription(canonical));
            }
            for &tok in &tr {
                if tok as usize >= vocab.len() {
                    return Err(GraphError::TokenOutOfRange {
                        word: canonical,
                        token: tok,
                        size: vocab.len(),
                    });
                }
                if tok == vocab.blank_id() {
                    return Err(GraphError::BlankInTranscription(canonical));
                }
            }
            if !uniq.contains(&tr) {
                uniq.push(tr);
            }
        }
        Ok(Self {
            canonical,
            transcriptions: uniq,
        })
    }
}

pub fn normalize_canonical(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A transcription shared by two entries; the later one was dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateTranscription {
    pub kept: EntryId,
    pub dropped: EntryId,
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    /// `None` only for the root.
    pub token: Option<TokenId>,
    /// Sorted by token id.
    pub children: Vec<(TokenId, NodeId)>,
    pub entry: Option<EntryId>,
    pub parent: Option<NodeId>,
}

impl Node {
    pub fn is_end_of_word(&self) -> bool {
        self.entry.is_some()
    }

    pub fn child(&self, token: TokenId) -> Option<NodeId> {
        self.children
            .binary_search_by_key(&token, |&(t, _)| t)
            .ok()
            .map(|i| self.children[i].1)
    }
}

/// Immutable prefix tree. Nodes are numbered in BFS order with children
/// visited by ascending token id, so numbering is independent of entry order.
#[derive(Debug, Clone)]
pub struct ContextGraph {
    nodes: Vec<Node>,
    entries: Vec<BiasingEntry>,
    vocab_size: usize,
    blank_id: TokenId,
    vocab_fingerprint: [u8; 32],
}

#[derive(Debug, Default)]
struct BuildNode {
    token: Option<TokenId>,
    children: BTreeMap<TokenId, usize>,
    entry: Option<EntryId>,
}

impl ContextGraph {
    /// Builds the trie. Entries must come from [`BiasingEntry::new`] with the
    /// same vocabulary. A transcription already owned by an earlier entry is
    /// removed from the later one and reported.
    pub fn build(
        entries: Vec<BiasingEntry>,
        vocab: &Vocabulary,
    ) -> (Self, Vec<DuplicateTranscription>) {
        let mut arena = vec![BuildNode::default()];
        let mut duplicates = Vec::new();
        let mut kept_entries = Vec::with_capacity(entries.len());
        for (eid, mut entry) in entries.into_iter().enumerate() {
            let eid = eid as EntryId;
            entry.transcriptions.retain(|tr| {
                let mut cur = 0usize;
                for &tok in tr {
                    cur = match arena[cur].children.get(&tok) {
                        Some(&c) => c,
                        None => {
                            arena.push(BuildNode {
                                token: Some(tok),
                                ..Default::default()
                            });
                            let id = arena.len() - 1;
                            arena[cur].children.insert(tok, id);
                            id
                        }
                    };
                }
                match arena[cur].entry {
                    Some(owner) if owner != eid => {
                        duplicates.push(DuplicateTranscription {
                            kept: owner,
                            dropped: eid,
                            tokens: tr.clone(),
                        });
                        false
                    }
                    _ => {
                        arena[cur].entry = Some(eid);
                        true
                    }
                }
            });
            kept_entries.push(entry);
        }

        // Renumber in BFS order.
        let mut order = Vec::with_capacity(arena.len());
        let mut new_id = vec![0 as NodeId; arena.len()];
        let mut queue = VecDeque::from([0usize]);
        while let Some(n) = queue.pop_front() {
            new_id[n] = order.len() as NodeId;
            order.push(n);
            queue.extend(arena[n].children.values().copied());
        }
        let mut nodes: Vec<Node> = order
            .iter()
            .map(|&old| Node {
                token: arena[old].token,
                children: arena[old]
                    .children
                    .iter()
                    .map(|(&t, &c)| (t, new_id[c]))
                    .collect(),
                entry: arena[old].entry,
                parent: None,
            })
            .collect();
        for id in 0..nodes.len() {
            let children = nodes[id].children.clone();
            for (_, c) in children {
                nodes[c as usize].parent = Some(id as NodeId);
            }
        }
        // Dangling prefixes from dropped duplicates never exist: a duplicate
        // path always ends on an already-owned node.
        (
            Self {
                nodes,
                entries: kept_entries,
                vocab_size: vocab.len(),
                blank_id: vocab.blank_id(),
                vocab_fingerprint: vocab.fingerprint(),
            },
            duplicates,
        )
    }

    /// Graph with only a root node.
    pub fn empty(vocab: &Vocabulary) -> Self {
        Self::build(Vec::new(), vocab).0
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn entries(&self) -> &[BiasingEntry] {
        &self.entries
    }

    pub fn entry(&self, id: EntryId) -> &BiasingEntry {
        &self.entries[id as usize]
    }

    pub fn num_transcriptions(&self) -> usize {
        self.entries.iter().map(|e| e.transcriptions.len()).sum()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn blank_id(&self) -> TokenId {
        self.blank_id
    }

    pub fn vocab_fingerprint(&self) -> &[u8; 32] {
        &self.vocab_fingerprint
    }

    /// Follows `tokens` from the root.
    pub fn walk(&self, tokens: &[TokenId]) -> Option<NodeId> {
        tokens
            .iter()
            .try_fold(ROOT, |cur, &t| self.node(cur).child(t))
    }

    /// Order-independent text form: one line per node in BFS order with its
    /// depth, token, parent position and owning canonical word.
    pub fn canonical_form(&self) -> String {
        let mut out = String::new();
        let mut depth = vec![0usize; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                depth[i] = depth[p as usize] + 1;
            }
            let word = n
                .entry
                .map(|e| self.entries[e as usize].canonical.as_str())
                .unwrap_or("");
            let tok = n.token.map_or_else(|| "-".to_string(), |t| t.to_string());
            let parent = n.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
            let _ = writeln!(out, "{i} d={} t={tok} p={parent} w={word}", depth[i]);
        }
        out
    }

    /// Graphviz rendering with nodes in BFS order. Token ids are replaced by
    /// their text when a vocabulary is given.
    pub fn to_dot(&self, vocab: Option<&Vocabulary>) -> String {
        let mut out = String::from("digraph context_graph {\n  rankdir=LR;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let label = match n.token {
                None => "root".to_string(),
                Some(t) => vocab
                    .and_then(|v| v.token(t))
                    .map_or_else(|| t.to_string(), str::to_string),
            };
            let shape = if n.is_end_of_word() {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(
                out,
                "  n{i} [label=\"{}\", shape={shape}];",
                escape_dot(&label)
            );
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for &(_, c) in &n.children {
                let _ = writeln!(out, "  n{i} -> n{c};");
            }
        }
        out.push_str("}\n");
        out
    }

    /// Versioned binary form: the entry list plus the vocabulary fingerprint.
    /// The trie is rebuilt on load.
    pub fn write<W: Write>(&self, mut out: W) -> Result<(), GraphError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(GRAPH_MAGIC);
        buf.push(GRAPH_VERSION);
        buf.extend_from_slice(&self.vocab_fingerprint);
        put_u32(&mut buf, self.vocab_size as u32);
        put_u32(&mut buf, self.blank_id);
        put_u32(&mut buf, self.entries.len() as u32);
        for e in &self.entries {
            put_u32(&mut buf, e.canonical.len() as u32);
            buf.extend_from_slice(e.canonical.as_bytes());
            put_u32(&mut buf, e.transcriptions.len() as u32);
            for tr in &e.transcriptions {
                put_u32(&mut buf, tr.len() as u32);
                for &t in tr {
                    put_u32(&mut buf, t);
                }
            }
        }
        out.write_all(&buf)?;
        Ok(())
    }

    /// Loads a graph file, refusing one built against another vocabulary.
    pub fn read<R: Read>(mut source: R, vocab: &Vocabulary) -> Result<Self, GraphError> {
        let mut buf = Vec::new();
        source.read_to_end(&mut buf)?;
        let mut r = Cursor { buf: &buf, pos: 0 };
        if r.take(4)? != GRAPH_MAGIC {
            return Err(GraphError::BadMagic);
        }
        let version = r.take(1)?[0];
        if version != GRAPH_VERSION {
            return Err(GraphError::UnsupportedVersion(version));
        }
        let fp = r.take(32)?;
        let vocab_size = r.u32()? as usize;
        let blank_id = r.u32()?;
        if fp != vocab.fingerprint()
            || vocab_size != vocab.len()
            || blank_id != vocab.blank_id()
        {
            return Err(GraphError::VocabMismatch);
        }
        let n_entries = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n_entries.min(1 << 16));
        for _ in 0..n_entries {
            let len = r.u32()? as usize;
            let canonical = std::str::from_utf8(r.take(len)?)
                .map_err(|_| GraphError::Utf8)?
                .to_string();
            let n_tr = r.u32()? as usize;
            let mut transcriptions = Vec::with_capacity(n_tr.min(1 << 10));
            for _ in 0..n_tr {
                let len = r.u32()? as usize;
                let mut tr = Vec::with_capacity(len.min(1 << 10));
                for _ in 0..len {
                    tr.push(r.u32()?);
                }
                transcriptions.push(tr);
            }
            entries.push(BiasingEntry {
                canonical,
                transcriptions,
            });
        }
        if r.pos != buf.len() {
            return Err(GraphError::Truncated);
        }
        for e in &entries {
            for tr in &e.transcriptions {
                if tr.is_empty() {
                    return Err(GraphError::EmptyTranscription(e.canonical.clone()));
                }
                if let Some(&t) = tr.iter().find(|&&t| t as usize >= vocab.len()) {
                    return Err(GraphError::TokenOutOfRange {
                        word: e.canonical.clone(),
                        token: t,
                        size: vocab.len(),
                    });
                }
                if tr.contains(&vocab.blank_id()) {
                    return Err(GraphError::BlankInTranscription(e.canonical.clone()));
                }
            }
        }
        Ok(Self::build(entries, vocab).0)
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphError> {
        let end = self.pos.checked_add(n).ok_or(GraphError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(GraphError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::new((0..n).map(|i| format!("t{i}"))).unwrap()
    }

    // g=0 p=1 u=2 e=3 f=4 o=5 r=6 c=7
    fn gpu_geforce() -> (ContextGraph, Vocabulary) {
        let v = vocab(9);
        let gpu = BiasingEntry::new("gpu", vec![vec![0, 1, 2]], &v).unwrap();
        let geforce = BiasingEntry::new("geforce", vec![vec![0, 3, 4, 5, 6, 7, 3]], &v).unwrap();
        (ContextGraph::build(vec![gpu, geforce], &v).0, v)
    }

    #[test]
    fn shared_prefix() {
        let (g, _) = gpu_geforce();
        let root = g.node(ROOT);
        assert_eq!(root.children.len(), 1);
        let gnode = g.node(root.children[0].1);
        assert_eq!(gnode.token, Some(0));
        let kids: Vec<TokenId> = gnode.children.iter().map(|c| c.0).collect();
        assert_eq!(kids, vec![1, 3]);
        assert_eq!(g.num_nodes() - 1, 9);
        assert_eq!(g.node(g.walk(&[0, 1, 2]).unwrap()).entry, Some(0));
        assert_eq!(g.node(g.walk(&[0, 3, 4, 5, 6, 7, 3]).unwrap()).entry, Some(1));
        assert!(!g.node(g.walk(&[0, 1]).unwrap()).is_end_of_word());
        assert_eq!(g.walk(&[1]), None);
    }

    #[test]
    fn empty_graph() {
        let v = vocab(3);
        let g = ContextGraph::empty(&v);
        assert_eq!(g.num_nodes(), 1);
        let dot = g.to_dot(None);
        assert_eq!(dot.matches("[label=").count(), 1);
    }

    #[test]
    fn alternative_transcriptions_share_entry() {
        let v = vocab(7);
        let e = BiasingEntry::new("gpu", vec![vec![0, 1, 2], vec![0, 4, 5]], &v).unwrap();
        let (g, dups) = ContextGraph::build(vec![e], &v);
        assert!(dups.is_empty());
        let ends: Vec<_> = g.nodes().iter().filter(|n| n.is_end_of_word()).collect();
        assert_eq!(ends.len(), 2);
        assert!(ends.iter().all(|n| n.entry == Some(0)));
    }

    #[test]
    fn duplicate_transcription_first_wins() {
        let v = vocab(4);
        let a = BiasingEntry::new("cuda", vec![vec![0, 1]], &v).unwrap();
        let b = BiasingEntry::new("kuda", vec![vec![0, 1], vec![2]], &v).unwrap();
        let (g, dups) = ContextGraph::build(vec![a, b], &v);
        assert_eq!(
            dups,
            vec![DuplicateTranscription {
                kept: 0,
                dropped: 1,
                tokens: vec![0, 1]
            }]
        );
        assert_eq!(g.node(g.walk(&[0, 1]).unwrap()).entry, Some(0));
        assert_eq!(g.entry(1).transcriptions, vec![vec![2]]);
    }

    #[test]
    fn entry_validation() {
        let v = vocab(4);
        assert!(matches!(
            BiasingEntry::new("x", vec![vec![3]], &v),
            Err(GraphError::BlankInTranscription(_))
        ));
        assert!(matches!(
            BiasingEntry::new("x", vec![vec![9]], &v),
            Err(GraphError::TokenOutOfRange { .. })
        ));
        assert!(matches!(
            BiasingEntry::new("x", vec![vec![]], &v),
            Err(GraphError::EmptyTranscription(_))
        ));
        assert!(matches!(
            BiasingEntry::new("  ", vec![vec![0]], &v),
            Err(GraphError::EmptyCanonical(_))
        ));
        let e = BiasingEntry::new("  Tensor   Core ", vec![vec![0], vec![0]], &v).unwrap();
        assert_eq!(e.canonical, "tensor core");
        assert_eq!(e.transcriptions.len(), 1);
    }

    #[test]
    fn dot_is_deterministic() {
        let (g, v) = gpu_geforce();
        let a = g.to_dot(Some(&v));
        assert_eq!(a, g.to_dot(Some(&v)));
        assert_eq!(a.matches("[label=").count(), 10);
        assert!(a.contains("n0 [label=\"root\""));
    }

    #[test]
    fn file_round_trip_and_vocab_check() {
        let (g, v) = gpu_geforce();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        let back = ContextGraph::read(buf.as_slice(), &v).unwrap();
        assert_eq!(back.canonical_form(), g.canonical_form());
        let other = vocab(10);
        assert!(matches!(
            ContextGraph::read(buf.as_slice(), &other),
            Err(GraphError::VocabMismatch)
        ));
        assert!(matches!(
            ContextGraph::read(&buf[..buf.len() - 1], &v),
            Err(GraphError::Truncated)
        ));
    }

    fn entry_sets() -> impl Strategy<Value = Vec<Vec<Vec<TokenId>>>> {
        let tr = proptest::collection::vec(0u32..4, 1..5);
        let entry = proptest::collection::vec(tr, 1..3);
        proptest::collection::vec(entry, 0..6)
    }

    fn make_entries(raw: &[Vec<Vec<TokenId>>], v: &Vocabulary) -> Vec<BiasingEntry> {
        raw.iter()
            .enumerate()
            .map(|(i, trs)| BiasingEntry::new(&format!("w{i}"), trs.clone(), v).unwrap())
            .collect()
    }

    proptest! {
        #[test]
        fn node_count_bound(raw in entry_sets()) {
            let v = vocab(5);
            let entries = make_entries(&raw, &v);
            let (g, _) = ContextGraph::build(entries, &v);
            let total: usize = g.entries().iter().flat_map(|e| &e.transcriptions).map(Vec::len).sum();
            prop_assert!(g.num_nodes() <= 1 + total);
            let trs: Vec<&Vec<TokenId>> = g.entries().iter().flat_map(|e| &e.transcriptions).collect();
            let shares = trs.iter().enumerate().any(|(i, a)| {
                trs.iter().enumerate().any(|(j, b)| i != j && a[0] == b[0])
            });
            prop_assert_eq!(g.num_nodes() == 1 + total, !shares);
        }

        #[test]
        fn every_transcription_reaches_its_entry(raw in entry_sets()) {
            let v = vocab(5);
            let (g, _) = ContextGraph::build(make_entries(&raw, &v), &v);
            for (eid, e) in g.entries().iter().enumerate() {
                for tr in &e.transcriptions {
                    let n = g.walk(tr).unwrap();
                    prop_assert_eq!(g.node(n).entry, Some(eid as EntryId));
                }
            }
            // A sequence that is not a transcription never lands on an end node.
            let all: Vec<&Vec<TokenId>> = g.entries().iter().flat_map(|e| &e.transcriptions).collect();
            for a in 0..4u32 {
                for b in 0..4u32 {
                    let seq = vec![a, b];
                    if all.iter().any(|t| **t == seq) { continue; }
                    if let Some(n) = g.walk(&seq) {
                        prop_assert!(!g.node(n).is_end_of_word());
                    }
                }
            }
        }

        #[test]
        fn tree_shape(raw in entry_sets()) {
            let v = vocab(5);
            let (g, _) = ContextGraph::build(make_entries(&raw, &v), &v);
            prop_assert!(g.node(ROOT).parent.is_none());
            for (i, n) in g.nodes().iter().enumerate().skip(1) {
                let p = g.node(n.parent.unwrap());
                prop_assert_eq!(p.children.iter().filter(|c| c.1 == i as NodeId).count(), 1);
            }
            for n in g.nodes() {
                let toks: Vec<TokenId> = n.children.iter().map(|c| c.0).collect();
                prop_assert!(toks.windows(2).all(|w| w[0] < w[1]));
            }
        }

        #[test]
        fn permutation_invariant(raw in entry_sets(), seed in any::<u64>()) {
            let v = vocab(5);
            // keep only entries without cross-entry duplicate transcriptions
            let mut seen = std::collections::HashSet::new();
            let raw: Vec<_> = raw.into_iter().filter(|trs| {
                let fresh = trs.iter().all(|t| !seen.contains(t));
                if fresh { seen.extend(trs.iter().cloned()); }
                fresh
            }).collect();
            let entries = make_entries(&raw, &v);
            let mut shuffled = entries.clone();
            let n = shuffled.len();
            if n > 1 {
                let mut s = seed;
                for i in (1..n).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    shuffled.swap(i, (s >> 33) as usize % (i + 1));
                }
            }
            let (a, _) = ContextGraph::build(entries, &v);
            let (b, _) = ContextGraph::build(shuffled, &v);
            prop_assert_eq!(a.canonical_form(), b.canonical_form());
        }
    }
}
