//! Worked examples whose expected values come from independent computations.

use std::collections::{BTreeMap, BTreeSet};

use ctcws::greedy::{AlignedWord, WordAlignment};
use ctcws::merge::merge_transducer;
use ctcws::oracle::best_path_score;
use ctcws::synth::MatrixBuilder;
use ctcws::{
    expand_entries, find_best_hyps, greedy_ctc_align, spot, BiasingEntry, ContextGraph, ContextItem,
    SpotterConfig, TokenId, Vocabulary,
};

/// Prefixes of all transcriptions, counted independently of the trie code.
fn distinct_prefixes(trs: &[Vec<TokenId>]) -> usize {
    let mut set = BTreeSet::new();
    for t in trs {
        for i in 1..=t.len() {
            set.insert(t[..i].to_vec());
        }
    }
    set.len()
}

#[test]
fn gpu_geforce_graph() {
    let toks = ["g", "p", "u", "e", "f", "o", "r", "c", "<b>"];
    let v = Vocabulary::new(toks).unwrap();
    let id = |s: &str| v.id(s).unwrap();
    let gpu: Vec<TokenId> = ["g", "p", "u"].iter().map(|t| id(t)).collect();
    let geforce: Vec<TokenId> = ["g", "e", "f", "o", "r", "c", "e"].iter().map(|t| id(t)).collect();
    let entries = vec![
        BiasingEntry::new("gpu", vec![gpu.clone()], &v).unwrap(),
        BiasingEntry::new("geforce", vec![geforce.clone()], &v).unwrap(),
    ];
    let (g, _) = ContextGraph::build(entries, &v);
    assert_eq!(g.num_nodes() - 1, distinct_prefixes(&[gpu, geforce]));
    assert_eq!(g.num_nodes() - 1, 9);
    let root = g.node(0);
    assert_eq!(root.children.len(), 1);
    assert_eq!(g.node(root.children[0].1).children.len(), 2);
    let dot = g.to_dot(Some(&v));
    assert_eq!(dot, g.to_dot(Some(&v)));
}

#[test]
fn two_spellings_two_word_ends() {
    let v = Vocabulary::new(["\u{2581}g", "p", "u", "\u{2581}p", "\u{2581}u", "<b>"]).unwrap();
    let (entries, _) = expand_entries(&[ContextItem::from("gpu")], None, &BTreeMap::new(), &v, true);
    assert_eq!(entries[0].transcriptions, vec![vec![0, 1, 2], vec![0, 3, 4]]);
    let (g, _) = ContextGraph::build(entries, &v);
    // brute-force walk over every token sequence up to length 3
    let mut ends = 0;
    let mut stack: Vec<Vec<TokenId>> = vec![vec![]];
    while let Some(seq) = stack.pop() {
        if let Some(n) = g.walk(&seq) {
            if g.node(n).entry == Some(0) {
                ends += 1;
            }
        }
        if seq.len() < 3 {
            for t in 0..5 {
                let mut s = seq.clone();
                s.push(t);
                stack.push(s);
            }
        }
    }
    assert_eq!(ends, 2);
    assert_eq!(g.nodes().iter().filter(|n| n.entry.is_some()).count(), 2);
}

/// CTC hears "in video"; the transducer wrote "invidia". The spotted
/// "nvidia" beats the CTC words and replaces the transducer word.
#[test]
fn transducer_invidia_replaced() {
    let v = Vocabulary::new([
        "\u{2581}the", "\u{2581}in", "\u{2581}vid", "eo", "\u{2581}nv", "idia", "<b>",
    ])
    .unwrap();
    let (the, inn, vid, eo, nv, idia) = (0, 1, 2, 3, 4, 5);
    let b = v.blank_id();
    let m = MatrixBuilder::new(v.len(), b)
        .token(the, 0.9, 2)
        .blank(0.9, 1)
        .frame(&[(inn, 0.5), (nv, 0.4)])
        .frame(&[(vid, 0.5), (idia, 0.4)])
        .frame(&[(eo, 0.5), (idia, 0.4)])
        .blank(0.9, 2)
        .build()
        .unwrap();
    let mut manual = BTreeMap::new();
    manual.insert("nvidia".to_string(), vec!["in video".to_string()]);
    let (entries, _) = expand_entries(&[ContextItem::from("nvidia")], None, &manual, &v, false);
    let entry = entries[0].clone();
    let (g, _) = ContextGraph::build(entries, &v);
    let cfg = SpotterConfig::default();
    let best = find_best_hyps(&spot(&m, &g, &cfg).unwrap());
    assert_eq!(best.len(), 1);
    let c = &best[0];

    let mut oracle = f64::NEG_INFINITY;
    for labels in &entry.transcriptions {
        for s in 0..m.frames() {
            for e in s..m.frames() {
                if let Some(x) = best_path_score(&m, s, e, labels, b, cfg.cb_w) {
                    oracle = oracle.max(x);
                }
            }
        }
    }
    assert!((c.score - oracle).abs() < 1e-6, "{} vs {oracle}", c.score);

    let ctc = greedy_ctc_align(&m, &v, cfg.ctc_w);
    assert_eq!(ctc.text(), "the in video");
    let transducer = WordAlignment {
        words: vec![
            AlignedWord { word: "the".into(), start_frame: 0, end_frame: 1, score: f64::NEG_INFINITY },
            AlignedWord { word: "invidia".into(), start_frame: 3, end_frame: 5, score: f64::NEG_INFINITY },
        ],
        frames: m.frames(),
        blank_scores: Vec::new(),
    };
    let r = merge_transducer(&transducer, &ctc, &best);
    assert!(r.decisions[0].accepted);
    assert_eq!(r.text, "the nvidia");

    let rejected = merge_transducer(&transducer, &ctc, &[]);
    assert_eq!(rejected.text, "the invidia");
}
