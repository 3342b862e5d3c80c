//! Command-line front end.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sir_core::query::run_query;
use sir_core::rules::{simulate, Combine, ImageThreshold, Seed};
use sir_core::synth::{clustered, planted_variants, ClusterSpec, VariantSpec};
use sir_core::variants::{generate, recall_curve, title_corpus, SoSParams};
use sir_core::{CodecConfig, EmbeddingVector, Query, Rule, SearchParams, StoreConfig, TextPredicate, Timestamp};

use crate::bench::{self, BenchSpec, FilterBenchSpec};
use crate::clock::{utc_now, MonotonicClock};
use crate::error::{Result, SirError};
use crate::formats::{read_groups, read_jsonl_strict, read_pair, write_jsonl, write_pair};
use crate::jobs::{run_sweep, SweepInput};
use crate::report;
use crate::rulebook::RuleBook;
use crate::service::{self, ServiceConfig};
use crate::sirv;
use crate::storedir::StoreDir;
use crate::stream::{consume, ConsumeOptions, JsonlSource, VecSource};

#[derive(Debug, Parser)]
#[command(name = "sir", version, about = "Similar-item retrieval over binarized embeddings")]
pub struct Cli {
    /// Store directory. Overrides `store_dir` from `--config`.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Service configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Wall-clock override, RFC 3339 or epoch seconds.
    #[arg(long, global = true, value_parser = parse_time)]
    pub now: Option<Timestamp>,
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_time(s: &str) -> std::result::Result<Timestamp, String> {
    if let Ok(secs) = s.parse::<i64>() {
        return Ok(Timestamp::from_secs(secs));
    }
    Timestamp::parse_rfc3339(s).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a SIRV vector file with its JSONL metadata, or a JSONL record stream.
    Ingest(IngestArgs),
    /// Nearest neighbors of a stored item or a vector.
    Search(SearchArgs),
    #[command(subcommand)]
    Rule(RuleCommand),
    /// Apply finalized rules to a corpus.
    Sweep(SweepArgs),
    /// Retrieval quality and latency over a seeded synthetic corpus.
    Bench(BenchArgs),
    /// Variant candidate sets and recall curves.
    Variants(VariantsArgs),
    /// Run the HTTP service.
    Serve,
    /// Store summary.
    Status,
    /// Write a snapshot and empty the write-ahead log.
    Checkpoint,
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct CodecArgs {
    /// Embedding dimension (new stores only).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Code length in bits.
    #[arg(long, default_value_t = 256)]
    pub bits: usize,
    /// Bits per subcode.
    #[arg(long, default_value_t = CodecConfig::DEFAULT_SUBCODE_BITS)]
    pub subcode_bits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub window_days: Option<i64>,
    #[arg(long)]
    pub bucket_days: Option<i64>,
    /// Keep only binary codes.
    #[arg(long)]
    pub codes_only: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// SIRV vector file, or a JSONL record file when META is omitted (`-` reads stdin).
    pub vectors: PathBuf,
    pub meta: Option<PathBuf>,
    #[command(flatten)]
    pub codec: CodecArgs,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, conflicts_with = "vector_file", required_unless_present = "vector_file")]
    pub item: Option<String>,
    /// SIRV file (first record) or a JSON array of numbers.
    #[arg(long)]
    pub vector_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Subcode mismatch radius; defaults to one less than the
    /// subcode count (any shared subcode makes a candidate).
    #[arg(long)]
    pub radius: Option<usize>,
    /// Maximum Hamming distance of hits.
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Predicate JSON, e.g. `{"any_of":[{"all_of":["lamp"]}]}`.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub rerank_depth: usize,
}

#[derive(Debug, Subcommand)]
pub enum RuleCommand {
    /// Create a draft rule from seed items or seed vectors.
    Create(RuleCreateArgs),
    /// Estimate a rule's hits on the sample store.
    Simulate(RuleSimulateArgs),
    /// Freeze a rule for sweeps.
    Finalize { id: String },
    Show { id: String },
    List,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CombineArg {
    And,
    ImageOnly,
    TextOnly,
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Self {
        match c {
            CombineArg::And => Combine::And,
            CombineArg::ImageOnly => Combine::ImageOnly,
            CombineArg::TextOnly => Combine::TextOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct RuleCreateArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub name: Option<String>,
    /// Stored item used as a seed (repeatable).
    #[arg(long = "seed")]
    pub seeds: Vec<String>,
    /// SIRV file whose records become seeds.
    #[arg(long)]
    pub seed_vectors: Option<PathBuf>,
    #[arg(long, conflicts_with = "min_cosine", required_unless_present = "min_cosine")]
    pub max_hamming: Option<u32>,
    #[arg(long)]
    pub min_cosine: Option<f64>,
    #[arg(long)]
    pub predicate: Option<String>,
    #[arg(long, value_enum, default_value_t = CombineArg::And)]
    pub combine: CombineArg,
}

#[derive(Debug, Args)]
pub struct RuleSimulateArgs {
    pub id: String,
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    /// Snapshot directory of a sample store; defaults to the main store.
    #[arg(long)]
    pub sample: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON array (or JSONL) of finalized rules.
    #[arg(long, required_unless_present = "rule_ids")]
    pub rules: Option<PathBuf>,
    /// Finalized rules from the store's rule book, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub rule_ids: Vec<String>,
    /// Directory holding vectors.sirv and meta.jsonl.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Flagged items as JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, required_unless_present = "filter_spec")]
    pub spec: Option<PathBuf>,
    /// Filtered-versus-unfiltered latency sweep spec.
    #[arg(long, conflicts_with = "spec")]
    pub filter_spec: Option<PathBuf>,
    /// Directory for the CSV tables; stdout when omitted.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VariantsArgs {
    /// Variant group file (JSONL) for a recall curve.
    #[arg(long, conflicts_with = "item", required_unless_present = "item")]
    pub groups: Option<PathBuf>,
    /// Single query item for one candidate set.
    #[arg(long)]
    pub item: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub n_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub k_grid: Vec<usize>,
    #[arg(long)]
    pub radius: Option<usize>,
    /// Write the curve as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Clusters,
    Variants,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Clusters or variant groups.
    #[arg(long, default_value_t = 100)]
    pub groups: usize,
    #[arg(long, default_value_t = 10)]
    pub group_size: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Share of variant-group members with paraphrased titles.
    #[arg(long, default_value_t = 0.5)]
    pub paraphrase_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Runs a parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Ingest(a) => ctx.ingest(a, out),
        Command::Search(a) => ctx.search(a, out),
        Command::Rule(c) => ctx.rule(c, out),
        Command::Sweep(a) => ctx.sweep(a, out),
        Command::Bench(a) => bench_cmd(a, ctx.json, out),
        Command::Variants(a) => ctx.variants(a, out),
        Command::Serve => ctx.serve(),
        Command::Status => ctx.status(out),
        Command::Checkpoint => {
            let mut dir = ctx.open_existing()?;
            dir.checkpoint()?;
            ctx.emit(out, &json!({"items": dir.store().item_count()}), || "checkpoint written".into())
        }
        Command::Synth(a) => synth(a, ctx.now, ctx.json, out),
    }
}

struct Context {
    store: Option<PathBuf>,
    config: Option<ServiceConfig>,
    now: Timestamp,
    json: bool,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let config = cli.config.as_deref().map(ServiceConfig::load).transpose()?;
        let store = cli.store.clone().or_else(|| config.as_ref().map(|c| c.store_dir.clone()));
        Ok(Self {
            store,
            config,
            now: cli.now.unwrap_or_else(utc_now),
            json: cli.json,
        })
    }

    fn store_path(&self) -> Result<&Path> {
        self.store
            .as_deref()
            .ok_or_else(|| SirError::Invalid("no store directory; pass --store or --config".into()))
    }

    fn open_existing(&self) -> Result<StoreDir> {
        let wanted = self.config.as_ref().map(ServiceConfig::store_config);
        StoreDir::open(self.store_path()?, wanted, self.now)
    }

    fn emit<T: Serialize>(&self, out: &mut dyn Write, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let line = if self.json {
            serde_json::to_string(value).expect("serializable")
        } else {
            text()
        };
        writeln!(out, "{line}").map_err(SirError::io("stdout"))
    }

    fn ingest(&self, a: IngestArgs, out: &mut dyn Write) -> Result<()> {
        let path = self.store_path()?;
        let wanted = match (&self.config, a.codec.dim) {
            (Some(c), None) => Some(c.store_config()),
            (_, Some(dim)) => {
                let mut cfg = StoreConfig::new(codec_from_args(dim, &a.codec)?);
                if let Some(w) = a.codec.window_days {
                    cfg.window_days = w;
                }
                if let Some(b) = a.codec.bucket_days {
                    cfg.bucket_days = b;
                }
                cfg.store_embeddings = !a.codec.codes_only;
                Some(cfg)
            }
            (None, None) => None,
        };
        let mut dir = StoreDir::open(path, wanted, self.now)?;
        let opts = ConsumeOptions {
            batch_size: a.batch_size.max(1),
            ..ConsumeOptions::default()
        };
        let now = self.now;
        let clock = move || now;
        let stats = match &a.meta {
            Some(meta) => {
                let records = read_pair(&a.vectors, meta)?;
                consume(&mut dir, &mut VecSource::new(records), &clock, opts)?
            }
            None if a.vectors == Path::new("-") => {
                let stdin = io::stdin();
                consume(&mut dir, &mut JsonlSource::new(stdin.lock(), "stdin"), &clock, opts)?
            }
            None => {
                let file = std::fs::File::open(&a.vectors).map_err(SirError::io(&a.vectors))?;
                let name = a.vectors.display().to_string();
                consume(&mut dir, &mut JsonlSource::new(io::BufReader::new(file), name), &clock, opts)?
            }
        };
        dir.checkpoint()?;
        let items = dir.store().item_count();
        let body = json!({
            "ingested": stats.ingested(),
            "inserted": stats.inserted,
            "updated": stats.updated,
            "unchanged": stats.unchanged,
            "rejected": stats.rejected,
            "item_count": items,
        });
        self.emit(out, &body, || {
            format!(
                "ingested {} ({} new, {} updated, {} unchanged), rejected {}; store holds {items} items",
                stats.ingested(),
                stats.inserted,
                stats.updated,
                stats.unchanged,
                stats.rejected
            )
        })
    }

    fn search(&self, a: SearchArgs, out: &mut dyn Write) -> Result<()> {
        let dir = self.open_existing()?;
        let store = dir.store();
        let radius = a.radius.unwrap_or(store.codec().default_radius());
        let mut params = SearchParams::new(a.k, radius);
        params.rerank_depth = a.rerank_depth;
        let mut q = match (a.item, a.vector_file) {
            (Some(id), _) => Query::by_item(id, params),
            (None, Some(f)) => Query::by_embedding(read_vector(&f)?, params),
            (None, None) => unreachable!("clap requires one"),
        };
        if let Some(f) = a.filter {
            q = q.with_predicate(parse_predicate(&f)?);
        }
        q.threshold = a.threshold;
        let page = run_query(store, &q, &MonotonicClock::new())?;
        self.emit(out, &page, || {
            page.hits
                .iter()
                .enumerate()
                .map(|(i, h)| format!("{:>4}  {}  d={}  {}", i + 1, h.hit.id, h.hit.hamming_distance, h.title))
                .collect::<Vec<_>>()
                .join("\n")
        })
    }

    fn rule(&self, cmd: RuleCommand, out: &mut dyn Write) -> Result<()> {
        match cmd {
            RuleCommand::Create(a) => {
                let dir = self.open_existing()?;
                let mut seeds = Vec::new();
                for id in &a.seeds {
                    seeds.push(Seed::from_store(dir.store(), id)?);
                }
                if let Some(path) = &a.seed_vectors {
                    for r in sirv::read_all(path)?.1 {
                        seeds.push(Seed::from_embedding(r.id, EmbeddingVector::new(r.values)?, dir.store().plan())?);
                    }
                }
                let threshold = match (a.max_hamming, a.min_cosine) {
                    (Some(t), _) => ImageThreshold::MaxHamming(t),
                    (None, Some(c)) => ImageThreshold::MinCosine(c),
                    (None, None) => unreachable!("clap requires one"),
                };
                let predicate = a.predicate.as_deref().map(parse_predicate).transpose()?;
                let name = a.name.unwrap_or_else(|| a.id.clone());
                let rule = Rule::new(a.id, name, seeds, threshold, predicate, a.combine.into(), self.now)?;
                let mut book = RuleBook::open(&dir.rules_dir())?;
                let rule = book.create(rule)?;
                self.emit(out, rule, || format!("created draft rule {}", rule.id))
            }
            RuleCommand::Simulate(a) => {
                let dir = self.open_existing()?;
                let book = RuleBook::open(&dir.rules_dir())?;
                let rule = book.require(&a.id)?;
                let clock = MonotonicClock::new();
                let report = match &a.sample {
                    Some(p) => {
                        let (sample, _) = crate::persist::load(p)?
                            .ok_or_else(|| SirError::Invalid(format!("no snapshot at {}", p.display())))?;
                        simulate(rule, &sample, a.limit, &clock)?
                    }
                    None => simulate(rule, dir.store(), a.limit, &clock)?,
                };
                self.emit(out, &report, || {
                    let mut s = format!(
                        "{} of {} sample items hit (selectivity {:.4})",
                        report.hit_count, report.sample_size, report.selectivity
                    );
                    for h in &report.top_hits {
                        s.push_str(&format!("\n  {}  {:?}  {}", h.id, h.score, h.title));
                    }
                    s
                })
            }
            RuleCommand::Finalize { id } => {
                let dir = self.open_existing()?;
                let mut book = RuleBook::open(&dir.rules_dir())?;
                let now = self.now;
                let rule = if book.require(&id)?.is_finalized() {
                    book.require(&id)?
                } else {
                    book.update(&id, |r| r.finalize(now))?
                };
                self.emit(out, rule, || format!("rule {} finalized", rule.id))
            }
            RuleCommand::Show { id } => {
                let dir = self.open_existing()?;
                let book = RuleBook::open(&dir.rules_dir())?;
                let rule = book.require(&id)?;
                let pretty = serde_json::to_string_pretty(rule).expect("rule serializes");
                self.emit(out, rule, || pretty)
            }
            RuleCommand::List => {
                let dir = self.open_existing()?;
                let book = RuleBook::open(&dir.rules_dir())?;
                let rules: Vec<&Rule> = book.list().collect();
                self.emit(out, &rules, || {
                    rules.iter().map(|r| format!("{}  {:?}  {}", r.id, r.status, r.name)).collect::<Vec<_>>().join("\n")
                })
            }
        }
    }

    fn sweep(&self, a: SweepArgs, out: &mut dyn Write) -> Result<()> {
        let mut rules: Vec<Rule> = match &a.rules {
            Some(path) => read_rules(path)?,
            None => Vec::new(),
        };
        let plan = if a.rule_ids.is_empty() {
            let first = rules.first().ok_or_else(|| SirError::Invalid("rule file is empty".into()))?;
            let seed = first.seeds.first().ok_or_else(|| SirError::Invalid(format!("rule {} has no seeds", first.id)))?;
            let codec = match &self.config {
                Some(c) => c.codec,
                None => match &self.store {
                    Some(_) => *self.open_existing()?.store().codec(),
                    None => {
                        let dim = seed
                            .embedding
                            .as_ref()
                            .map(EmbeddingVector::dim)
                            .ok_or_else(|| SirError::Invalid("sweeping without a store needs seeds with embeddings".into()))?;
                        return Err(SirError::Invalid(format!(
                            "cannot infer the codec for dimension {dim}; pass --store or --config"
                        )));
                    }
                },
            };
            sir_core::ProjectionPlan::for_config(&codec)?
        } else {
            let dir = self.open_existing()?;
            let book = RuleBook::open(&dir.rules_dir())?;
            for id in &a.rule_ids {
                rules.push(book.require(id)?.clone());
            }
            dir.store().plan().clone()
        };
        let records = read_pair(&a.corpus.join("vectors.sirv"), &a.corpus.join("meta.jsonl"))?;
        let report = run_sweep(&rules, &plan, SweepInput::Records(records), |_| {})?;
        match &a.out {
            Some(path) => write_jsonl(path, &report.flagged)?,
            None if !self.json => {
                for f in &report.flagged {
                    writeln!(out, "{}", serde_json::to_string(f).expect("flag serializes")).map_err(SirError::io("stdout"))?;
                }
            }
            None => {}
        }
        let summary = json!({
            "scanned": report.scanned,
            "rejected": report.rejected,
            "flagged": report.flagged.len(),
            "elapsed_ms": report.elapsed_ms,
        });
        if self.json && a.out.is_none() {
            return self.emit(out, &report, String::new);
        }
        self.emit(out, &summary, || {
            format!("scanned {}, rejected {}, flagged {}", report.scanned, report.rejected, report.flagged.len())
        })
    }

    fn variants(&self, a: VariantsArgs, out: &mut dyn Write) -> Result<()> {
        let dir = self.open_existing()?;
        let store = dir.store();
        let radius = a.radius.unwrap_or(store.codec().default_radius());
        if let Some(item) = a.item {
            let n = a.n_grid.first().copied().unwrap_or(10);
            let k = a.k_grid.first().copied().unwrap_or(10);
            let set = generate(store, &title_corpus(store), &item, SoSParams { n, k, radius })?;
            return self.emit(out, &set, || set.entries.keys().cloned().collect::<Vec<_>>().join("\n"));
        }
        let groups = read_groups(a.groups.as_deref().expect("clap requires one"))?;
        let curve = recall_curve(store, &groups, &a.n_grid, &a.k_grid, radius)?;
        let csv = report::curve_table(Vec::new(), &curve.rows)?;
        if let Some(path) = &a.csv {
            std::fs::write(path, &csv).map_err(SirError::io(path))?;
        }
        let text = String::from_utf8(csv).expect("csv is utf-8");
        self.emit(out, &curve.rows, || text.trim_end().to_string())
    }

    fn serve(&self) -> Result<()> {
        let mut config = self
            .config
            .clone()
            .ok_or_else(|| SirError::Invalid("serve needs --config".into()))?;
        if let Some(s) = &self.store {
            config.store_dir = s.clone();
        }
        let rt = tokio::runtime::Runtime::new().map_err(SirError::io("tokio runtime"))?;
        rt.block_on(service::serve(config))
    }

    fn status(&self, out: &mut dyn Write) -> Result<()> {
        let dir = self.open_existing()?;
        let s = dir.store();
        let c = s.codec();
        let body = json!({
            "item_count": s.item_count(),
            "segment_count": s.segment_count(),
            "window_days": s.config().window_days,
            "codec": {"D": c.dim, "B": c.code_bits, "m": c.subcode_count, "seed": c.projection_seed},
        });
        self.emit(out, &body, || {
            format!(
                "{} items in {} segments, window {} days, codec D={} B={} m={} seed={}",
                s.item_count(),
                s.segment_count(),
                s.config().window_days,
                c.dim,
                c.code_bits,
                c.subcode_count,
                c.projection_seed
            )
        })
    }
}

fn codec_from_args(dim: usize, a: &CodecArgs) -> Result<CodecConfig> {
    if a.subcode_bits == 0 || a.bits % a.subcode_bits != 0 {
        return Err(SirError::Invalid(format!("--bits {} is not a multiple of --subcode-bits {}", a.bits, a.subcode_bits)));
    }
    Ok(CodecConfig::new(dim, a.bits, a.bits / a.subcode_bits, a.seed)?)
}

fn parse_predicate(s: &str) -> Result<TextPredicate> {
    serde_json::from_str(s).map_err(|e| SirError::parse("predicate", e))
}

fn read_vector(path: &Path) -> Result<EmbeddingVector> {
    let bytes = std::fs::read(path).map_err(SirError::io(path))?;
    if bytes.starts_with(&sirv::MAGIC) {
        let first = sirv::SirvReader::new(&bytes[..], path.display().to_string())?
            .next()
            .ok_or_else(|| SirError::Invalid(format!("{} holds no vectors", path.display())))??;
        return Ok(EmbeddingVector::new(first.values)?);
    }
    let values: Vec<f32> = serde_json::from_slice(&bytes).map_err(|e| SirError::parse(path.display().to_string(), e))?;
    Ok(EmbeddingVector::new(values)?)
}

fn read_rules(path: &Path) -> Result<Vec<Rule>> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(SirError::io(path))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| SirError::parse(path.display().to_string(), e));
    }
    read_jsonl_strict(path)
}

fn bench_cmd(a: BenchArgs, json_out: bool, out: &mut dyn Write) -> Result<()> {
    let write = |name: &str, body: &str, out: &mut dyn Write| -> Result<()> {
        match &a.out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(SirError::io(dir))?;
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(SirError::io(&path))
            }
            None if !json_out => write!(out, "{body}").map_err(SirError::io("stdout")),
            None => Ok(()),
        }
    };
    if let Some(path) = &a.filter_spec {
        let spec: FilterBenchSpec = read_json(path)?;
        let rows = bench::filter_benchmark(&spec)?;
        let csv = String::from_utf8(report::filter_table(Vec::new(), &rows)?).expect("csv is utf-8");
        write("filter.csv", &csv, out)?;
        if json_out {
            writeln!(out, "{}", serde_json::to_string(&rows).expect("rows serialize")).map_err(SirError::io("stdout"))?;
        }
        return Ok(());
    }
    let spec: BenchSpec = read_json(a.spec.as_deref().expect("clap requires one"))?;
    let output = bench::run(&spec)?;
    let quality = output.quality_csv()?;
    let latency = output.latency_csv()?;
    write("quality.csv", &quality, out)?;
    if a.out_dir.is_none() && !json_out {
        writeln!(out).map_err(SirError::io("stdout"))?;
    }
    write("latency.csv", &latency, out)?;
    if json_out {
        writeln!(out, "{}", serde_json::to_string(&output).expect("output serializes")).map_err(SirError::io("stdout"))?;
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(SirError::io(path))?;
    serde_json::from_slice(&bytes).map_err(|e| SirError::parse(path.display().to_string(), e))
}

fn synth(a: SynthArgs, now: Timestamp, json_out: bool, out: &mut dyn Write) -> Result<()> {
    let corpus = match a.kind {
        SynthKind::Clusters => clustered(&ClusterSpec::new(a.groups, a.group_size, a.dim, a.noise, a.seed, now))?,
        SynthKind::Variants => planted_variants(&VariantSpec::new(
            a.groups,
            a.group_size,
            a.dim,
            a.noise,
            a.paraphrase_rate,
            a.seed,
            now,
        ))?,
    };
    std::fs::create_dir_all(&a.out).map_err(SirError::io(&a.out))?;
    write_pair(&a.out, &corpus.records)?;
    write_jsonl(&a.out.join("groups.jsonl"), &corpus.groups)?;
    write_jsonl(&a.out.join("judgments.jsonl"), &corpus.judged)?;
    let body = json!({"records": corpus.records.len(), "groups": corpus.groups.len(), "dir": a.out});
    let line = if json_out {
        body.to_string()
    } else {
        format!("wrote {} records in {} groups to {}", corpus.records.len(), corpus.groups.len(), a.out.display())
    };
    writeln!(out, "{line}").map_err(SirError::io("stdout"))
}
