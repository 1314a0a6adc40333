use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use ctcws::alts::{
    alternative_spellings, expand_entries, parse_context_list, parse_manual_alts, ContextItem,
    ExpandWarning, WordCostDictionary,
};
use ctcws::graph::ContextGraph;
use ctcws::greedy::{greedy_ctc_align, load_transducer_alignment};
use ctcws::logprobs::LogProbMatrix;
use ctcws::manifest::{load_manifest, UtteranceRecord};
use ctcws::metrics::{mine_biasing_list, Evaluator};
use ctcws::pipeline::decode_utterance;
use ctcws::tokenize::tokenize_spelling;
use ctcws::vocab::{Vocabulary, WordBoundary};
use ctcws::SpotterConfig;

use crate::exit::{data, existing, usage, CmdResult, OrData, PARTIAL, SUCCESS};
use crate::{
    BuildGraphArgs, DecodeArgs, EvalArgs, GenAltsArgs, ListArgs, MineListArgs, Mode, VocabArgs,
};

fn open(path: &Path) -> CmdResult<BufReader<File>> {
    let f = File::open(existing(path)?).or_data(format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    let f = File::create(path).or_data(format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writer for an optional output path, stdout otherwise.
fn output(path: Option<&Path>) -> CmdResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn boundary(marker: &str, delimiter: Option<&String>) -> WordBoundary {
    match delimiter {
        Some(d) => WordBoundary::Delimiter(d.clone()),
        None => WordBoundary::Prefix(marker.to_string()),
    }
}

fn load_vocab_with(
    path: &Path,
    blank_id: Option<usize>,
    marker: &str,
    delimiter: Option<&String>,
) -> CmdResult<Vocabulary> {
    let vocab = Vocabulary::load(open(path)?).or_data(format!("bad vocabulary {}", path.display()))?;
    vocab
        .reconfigure(blank_id, boundary(marker, delimiter))
        .or_data("bad vocabulary options")
}

fn load_vocab(a: &VocabArgs) -> CmdResult<Vocabulary> {
    load_vocab_with(&a.vocab, a.blank_id, &a.boundary_marker, a.word_delimiter.as_ref())
}

struct ListSources {
    items: Vec<ContextItem>,
    dict: Option<WordCostDictionary>,
    manual: BTreeMap<String, Vec<String>>,
}

fn load_list(a: &ListArgs, list: &Path) -> CmdResult<ListSources> {
    let items = parse_context_list(open(list)?).or_data(format!("bad context list {}", list.display()))?;
    let dict = match &a.wordlist {
        Some(p) => Some(WordCostDictionary::load(open(p)?).or_data(format!("bad word list {}", p.display()))?),
        None => None,
    };
    let manual = match &a.manual_alts {
        Some(p) => parse_manual_alts(open(p)?).or_data(format!("bad alternatives file {}", p.display()))?,
        None => BTreeMap::new(),
    };
    Ok(ListSources { items, dict, manual })
}

#[derive(Debug, Default, Serialize)]
struct GraphStats {
    entries: usize,
    transcriptions: usize,
    nodes: usize,
    skipped_spellings: usize,
    dropped_entries: Vec<String>,
    duplicate_transcriptions: usize,
}

/// Expands the list and builds the graph. Words that cannot be spelled with
/// the vocabulary are dropped and reported in the stats.
fn build_from_list(a: &ListArgs, list: &Path, vocab: &Vocabulary) -> CmdResult<(ContextGraph, GraphStats)> {
    let src = load_list(a, list)?;
    let (entries, warnings) = expand_entries(&src.items, src.dict.as_ref(), &src.manual, vocab, !a.no_auto_alts);
    let mut stats = GraphStats::default();
    for w in &warnings {
        match w {
            ExpandWarning::SkippedSpelling { .. } => stats.skipped_spellings += 1,
            ExpandWarning::DroppedEntry { word, error } => {
                warn!("dropping {word:?}: {error}");
                stats.dropped_entries.push(word.clone());
            }
            ExpandWarning::Invalid { word, error } => {
                warn!("dropping {word:?}: {error}");
                stats.dropped_entries.push(word.clone());
            }
        }
    }
    let (graph, dups) = ContextGraph::build(entries, vocab);
    for d in &dups {
        warn!(
            "{:?} shares a spelling with {:?}; kept on the first",
            graph.entry(d.dropped).canonical,
            graph.entry(d.kept).canonical
        );
    }
    stats.entries = graph.entries().len();
    stats.transcriptions = graph.num_transcriptions();
    stats.nodes = graph.num_nodes();
    stats.duplicate_transcriptions = dups.len();
    Ok((graph, stats))
}

pub fn build_graph(a: BuildGraphArgs) -> CmdResult<u8> {
    let list = a.list.context_list.clone().ok_or_else(|| usage("--context-list is required"))?;
    let vocab = load_vocab(&a.vocab)?;
    let (graph, stats) = build_from_list(&a.list, &list, &vocab)?;
    let mut out = create(&a.output)?;
    graph.write(&mut out).or_data("writing graph")?;
    out.flush().or_data("writing graph")?;
    if let Some(dot) = &a.dot {
        std::fs::write(dot, graph.to_dot(Some(&vocab))).or_data(format!("cannot write {}", dot.display()))?;
    }
    println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
    if !stats.dropped_entries.is_empty() {
        if stats.entries == 0 {
            return Err(data("no biasing entry could be tokenized"));
        }
        return Ok(PARTIAL);
    }
    Ok(SUCCESS)
}

#[derive(Debug, Serialize)]
struct CandidateOutput {
    word: String,
    entry_id: u32,
    start_frame: usize,
    end_frame: usize,
    score: f64,
    greedy_score_sum: f64,
    replaced: Vec<String>,
    accepted: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct UtteranceOutput {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    greedy_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    merged_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spotted: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    candidates: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DecodeSummary {
    utterances: usize,
    failed: usize,
    /// Spot, align and merge time summed over utterances; loading excluded.
    decode_seconds: f64,
    wall_seconds: f64,
    workers: usize,
}

fn decode_one(
    rec: &UtteranceRecord,
    graph: &ContextGraph,
    cfg: &SpotterConfig,
    vocab: &Vocabulary,
    mode: Mode,
) -> Result<(UtteranceOutput, Duration), String> {
    let bytes = std::fs::read(&rec.logprob_source)
        .map_err(|e| format!("cannot read {}: {e}", rec.logprob_source.display()))?;
    let m = LogProbMatrix::from_bytes(&bytes).map_err(|e| format!("{}: {e}", rec.logprob_source.display()))?;
    let transducer = match mode {
        Mode::Ctc => None,
        Mode::Transducer => {
            let path = rec
                .transducer_alignment_source
                .as_ref()
                .ok_or("transducer mode needs a transducer_alignment for every utterance")?;
            let f = File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
            Some(load_transducer_alignment(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))?)
        }
    };
    let d = decode_utterance(&m, graph, cfg, vocab, transducer.as_ref()).map_err(|e| e.to_string())?;
    let candidates: Vec<CandidateOutput> = d
        .decisions()
        .iter()
        .map(|x| CandidateOutput {
            word: x.candidate.word.clone(),
            entry_id: x.candidate.entry_id,
            start_frame: x.candidate.start_frame,
            end_frame: x.candidate.end_frame,
            score: x.candidate.score,
            greedy_score_sum: x.greedy_score_sum,
            replaced: x.overlapped_words.iter().map(|w| w.word.clone()).collect(),
            accepted: x.accepted,
        })
        .collect();
    Ok((
        UtteranceOutput {
            id: rec.id.clone(),
            greedy_text: Some(d.baseline_text.clone()),
            merged_text: Some(d.merged_text().to_string()),
            spotted: Some(d.spotted),
            candidates: Some(serde_json::to_value(candidates).expect("candidates serialize")),
            error: None,
        },
        d.elapsed,
    ))
}

fn read_manifest(path: &Path) -> CmdResult<Vec<UtteranceRecord>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    load_manifest(open(path)?, Some(&base)).or_data(format!("bad manifest {}", path.display()))
}

pub fn decode(a: DecodeArgs) -> CmdResult<u8> {
    let cfg = a.spotter.config();
    cfg.validate().map_err(usage)?;
    let vocab = load_vocab(&a.vocab)?;
    let graph = match (&a.graph, &a.list.context_list) {
        (Some(g), _) => ContextGraph::read(open(g)?, &vocab).or_data(format!("cannot load graph {}", g.display()))?,
        (None, Some(list)) => build_from_list(&a.list, list, &vocab)?.0,
        (None, None) => return Err(usage("one of --graph or --context-list is required")),
    };
    let records = read_manifest(existing(&a.manifest)?)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers as usize)
        .build()
        .map_err(|e| data(format!("cannot start workers: {e}")))?;

    let started = Instant::now();
    let results: Vec<Result<(UtteranceOutput, Duration), String>> = pool.install(|| {
        records
            .par_iter()
            .map(|rec| decode_one(rec, &graph, &cfg, &vocab, a.mode))
            .collect()
    });
    let wall = started.elapsed();

    let mut out = create(&a.output)?;
    let mut failed = 0;
    let mut decode_time = Duration::ZERO;
    for (rec, res) in records.iter().zip(results) {
        let line = match res {
            Ok((o, t)) => {
                decode_time += t;
                o
            }
            Err(e) => {
                warn!("{}: {e}", rec.id);
                failed += 1;
                UtteranceOutput {
                    id: rec.id.clone(),
                    greedy_text: None,
                    merged_text: None,
                    spotted: None,
                    candidates: None,
                    error: Some(e),
                }
            }
        };
        serde_json::to_writer(&mut out, &line).or_data("writing results")?;
        out.write_all(b"\n").or_data("writing results")?;
    }
    out.flush().or_data("writing results")?;

    let summary = DecodeSummary {
        utterances: records.len(),
        failed,
        decode_seconds: decode_time.as_secs_f64(),
        wall_seconds: wall.as_secs_f64(),
        workers: a.workers as usize,
    };
    eprintln!(
        "decoded {} utterances ({} failed): {:.3}s spot+align+merge, {:.3}s wall with {} workers",
        summary.utterances, summary.failed, summary.decode_seconds, summary.wall_seconds, summary.workers
    );
    if let Some(p) = &a.summary {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &summary).or_data("writing summary")?;
        w.write_all(b"\n").and_then(|_| w.flush()).or_data("writing summary")?;
    }
    Ok(if failed > 0 { PARTIAL } else { SUCCESS })
}

fn read_results(path: &Path) -> CmdResult<Vec<UtteranceOutput>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.or_data(format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).or_data(format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> CmdResult<u8> {
    let results = read_results(&a.results)?;
    let records = read_manifest(existing(&a.manifest)?)?;
    let refs: HashMap<&str, &str> = records
        .iter()
        .filter_map(|r| r.reference_text.as_deref().map(|t| (r.id.as_str(), t)))
        .collect();
    let items = parse_context_list(open(&a.context_list)?).or_data("bad context list")?;
    let decode_seconds = match &a.summary {
        Some(p) => {
            let s: DecodeSummary = serde_json::from_reader(open(p)?).or_data(format!("bad summary {}", p.display()))?;
            s.decode_seconds
        }
        None => 0.0,
    };

    let mut ev = Evaluator::new(items.iter().map(|i| i.canonical.as_str()));
    let mut skipped = 0;
    for r in &results {
        let reference = refs
            .get(r.id.as_str())
            .ok_or_else(|| data(format!("no reference text for utterance {:?}", r.id)))?;
        let hyp = if a.baseline { &r.greedy_text } else { &r.merged_text };
        match hyp {
            Some(h) => ev.add(reference, h),
            None => {
                warn!("{}: no decode result, skipped", r.id);
                skipped += 1;
            }
        }
    }
    let report = ev.finish(decode_seconds);
    let mut w = output(a.output.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &report).or_data("writing report")?;
    w.write_all(b"\n").and_then(|_| w.flush()).or_data("writing report")?;
    Ok(if skipped > 0 { PARTIAL } else { SUCCESS })
}

pub fn mine_list(a: MineListArgs) -> CmdResult<u8> {
    let vocab = load_vocab(&a.vocab)?;
    let records = read_manifest(existing(&a.manifest)?)?;
    if records.is_empty() {
        return Err(data("manifest is empty"));
    }
    let mut pairs = Vec::new();
    let mut failed = 0;
    for rec in &records {
        let Some(reference) = &rec.reference_text else {
            continue;
        };
        let m = std::fs::read(&rec.logprob_source)
            .map_err(|e| e.to_string())
            .and_then(|b| LogProbMatrix::from_bytes(&b).map_err(|e| e.to_string()));
        match m {
            Ok(m) if m.vocab_size() == vocab.len() => {
                pairs.push((reference.clone(), greedy_ctc_align(&m, &vocab, 1.0).text()));
            }
            Ok(m) => {
                warn!("{}: matrix has {} columns, vocabulary {}", rec.id, m.vocab_size(), vocab.len());
                failed += 1;
            }
            Err(e) => {
                warn!("{}: {e}", rec.id);
                failed += 1;
            }
        }
    }
    if pairs.is_empty() {
        return Err(data("no utterance with a reference text could be decoded"));
    }
    info!("mining over {} utterances", pairs.len());
    let mined = mine_biasing_list(&pairs, a.min_len, a.max_acc);
    let mut w = output(a.output.as_deref())?;
    for t in &mined {
        let line = if a.stats {
            format!("{}\t{}\t{:.4}\n", t.text, t.frequency, t.accuracy)
        } else {
            format!("{}\n", t.text)
        };
        w.write_all(line.as_bytes()).or_data("writing list")?;
    }
    w.flush().or_data("writing list")?;
    Ok(if failed > 0 { PARTIAL } else { SUCCESS })
}

pub fn gen_alts(a: GenAltsArgs) -> CmdResult<u8> {
    let list = a.list.context_list.clone().ok_or_else(|| usage("--context-list is required"))?;
    let vocab = match &a.vocab {
        Some(p) => Some(load_vocab_with(p, a.blank_id, &a.boundary_marker, a.word_delimiter.as_ref())?),
        None => None,
    };
    let src = load_list(&a.list, &list)?;
    let mut w = output(a.output.as_deref())?;
    for item in &src.items {
        let spellings: Vec<String> = alternative_spellings(item, src.dict.as_ref(), &src.manual, !a.list.no_auto_alts)
            .into_iter()
            .filter(|s| vocab.as_ref().is_none_or(|v| tokenize_spelling(s, v).is_ok()))
            .collect();
        let mut fields = vec![item.canonical.clone()];
        fields.extend(spellings.into_iter().filter(|s| *s != item.canonical));
        w.write_all(format!("{}\n", fields.join("\t")).as_bytes()).or_data("writing alternatives")?;
    }
    w.flush().or_data("writing alternatives")?;
    Ok(SUCCESS)
}
