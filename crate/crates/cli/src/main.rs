mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctcws::SpotterConfig;

#[derive(Debug, Parser)]
#[command(name = "ctcws", version, about = "Context biasing for CTC/Transducer ASR by CTC word spotting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build and serialize a context graph from a biasing list.
    BuildGraph(BuildGraphArgs),
    /// Decode every utterance of a manifest with context biasing.
    Decode(DecodeArgs),
    /// Score decode results against manifest references.
    Eval(EvalArgs),
    /// Rank poorly recognized words and bigrams as biasing-list candidates.
    MineList(MineListArgs),
    /// Print the spellings each biasing entry would be searched with.
    GenAlts(GenAltsArgs),
}

#[derive(Debug, Clone, Args)]
struct VocabArgs {
    /// Token list, one per line; line index is the token id.
    #[arg(long)]
    vocab: PathBuf,
    /// Blank token id (default: last token).
    #[arg(long)]
    blank_id: Option<usize>,
    /// Marker that starts a word in subword vocabularies.
    #[arg(long, default_value = ctcws::vocab::DEFAULT_BOUNDARY_MARKER)]
    boundary_marker: String,
    /// Character vocabularies: token separating words (overrides the marker).
    #[arg(long)]
    word_delimiter: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct ListArgs {
    /// Biasing words, one per line, optionally followed by tab-separated spellings.
    #[arg(long)]
    context_list: Option<PathBuf>,
    /// Extra spellings: `word<TAB>alt<TAB>...`.
    #[arg(long)]
    manual_alts: Option<PathBuf>,
    /// Frequency-ranked word list used to split compound words.
    #[arg(long)]
    wordlist: Option<PathBuf>,
    /// Do not add automatically generated spellings.
    #[arg(long)]
    no_auto_alts: bool,
}

#[derive(Debug, Clone, Args)]
struct SpotterArgs {
    /// Bonus per non-blank token of a biasing word.
    #[arg(long, default_value_t = SpotterConfig::default().cb_w, allow_negative_numbers = true)]
    cb_w: f64,
    /// Weight of greedy-alignment word scores.
    #[arg(long, default_value_t = SpotterConfig::default().ctc_w)]
    ctc_w: f64,
    /// Natural-log blank probability above which no word starts.
    #[arg(long, default_value_t = SpotterConfig::default().beta_thr, allow_negative_numbers = true)]
    beta_thr: f64,
    /// Natural-log probability below which a first token is not entered.
    #[arg(long, default_value_t = SpotterConfig::default().gamma_thr, allow_negative_numbers = true)]
    gamma_thr: f64,
    /// Beam width in nats.
    #[arg(long, default_value_t = SpotterConfig::default().beam_thr)]
    beam_thr: f64,
    /// Disable beam and state pruning and both thresholds.
    #[arg(long)]
    no_pruning: bool,
}

impl SpotterArgs {
    fn config(&self) -> SpotterConfig {
        SpotterConfig {
            cb_w: self.cb_w,
            ctc_w: self.ctc_w,
            beta_thr: self.beta_thr,
            gamma_thr: self.gamma_thr,
            beam_thr: self.beam_thr,
            pruning_enabled: !self.no_pruning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ctc,
    Transducer,
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    list: ListArgs,
    /// Graph file to write.
    #[arg(long, short)]
    output: PathBuf,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    list: ListArgs,
    /// Prebuilt graph (instead of --context-list).
    #[arg(long, conflicts_with = "context_list")]
    graph: Option<PathBuf>,
    #[command(flatten)]
    spotter: SpotterArgs,
    /// JSON-lines manifest: {"id", "logprobs", "text"?, "transducer_alignment"?}.
    #[arg(long)]
    manifest: PathBuf,
    /// JSON-lines results, one per manifest line in manifest order.
    #[arg(long, short)]
    output: PathBuf,
    /// Run summary with timing, consumed by `eval`.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Ctc)]
    mode: Mode,
    /// Worker threads.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    workers: u16,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Output of `decode`.
    #[arg(long)]
    results: PathBuf,
    /// Manifest holding the reference texts.
    #[arg(long)]
    manifest: PathBuf,
    /// Biasing list whose words are scored.
    #[arg(long)]
    context_list: PathBuf,
    /// Summary written by `decode`, for the decode time.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Score the unbiased baseline text instead of the merged text.
    #[arg(long)]
    baseline: bool,
    /// Report file (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MineListArgs {
    #[command(flatten)]
    vocab: VocabArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Shortest word or bigram kept, in characters.
    #[arg(long, default_value_t = ctcws::metrics::DEFAULT_MIN_LEN)]
    min_len: usize,
    /// Highest recognition accuracy kept.
    #[arg(long, default_value_t = ctcws::metrics::DEFAULT_MAX_ACCURACY)]
    max_acc: f64,
    /// Also print frequency and accuracy columns.
    #[arg(long)]
    stats: bool,
    /// Output file (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenAltsArgs {
    #[command(flatten)]
    list: ListArgs,
    /// Keep only spellings this vocabulary can tokenize.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    blank_id: Option<usize>,
    #[arg(long, default_value = ctcws::vocab::DEFAULT_BOUNDARY_MARKER)]
    boundary_marker: String,
    #[arg(long)]
    word_delimiter: Option<String>,
    /// Output file (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Decode(a) => commands::decode(a),
        Command::Eval(a) => commands::eval(a),
        Command::MineList(a) => commands::mine_list(a),
        Command::GenAlts(a) => commands::gen_alts(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
