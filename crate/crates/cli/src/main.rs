mod config;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use crm::corpus::{Corpus, Phrase, WindowIndex};
use crm::evaluation::{evaluate, grid_search, CorrelationMethod, Dataset};
use crm::exec::Execution;
use crm::kb::KnowledgeBase;
use crm::perturbation::{generate_perturbations, SynonymLexicon};
use crm::representation::{EmbeddingLexicon, ReprKind};
use crm::scoring::{BatchRecord, Scorer, ScoringConfig};
use crm::similarity::SimilarityMeasure;

#[derive(Parser)]
#[command(name = "crm", version, about = "Context-aware compositionality scores for multi-word phrases")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Run every stage on one thread.
    #[arg(long, global = true, env = "CRM_SEQUENTIAL")]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save a window index for a phrase list or dataset.
    Index(IndexCmd),
    /// Score one phrase in one usage scenario.
    Score(ScoreCmd),
    /// Score every dataset instance, one JSON record per line.
    Batch(DatasetCmd),
    /// Correlate scores with the gold grades of a dataset.
    Evaluate(DatasetCmd),
    /// Correlation for every (alpha, lambda) cell, written as a CSV matrix.
    Grid(GridCmd),
    /// List the perturbations of a phrase.
    Perturb(PerturbCmd),
    /// Summary statistics of a dataset file.
    Stats {
        dataset: PathBuf,
    },
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusFormat {
    /// Pick `dir` for directories and `lines` otherwise.
    Auto,
    /// One document per file.
    Dir,
    /// One document per line.
    Lines,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus directory or line file. Either this or --index is required.
    #[arg(long, env = "CRM_CORPUS")]
    corpus: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "auto")]
    corpus_format: CorpusFormat,

    /// Prebuilt window index. Phrases missing from it are treated as unseen.
    #[arg(long, env = "CRM_INDEX", conflicts_with = "corpus")]
    index: Option<PathBuf>,
}

#[derive(Args)]
struct Resources {
    #[command(flatten)]
    corpus: CorpusArgs,

    /// Synonym lexicon, `term<TAB>syn1,syn2,...` per line.
    #[arg(long, env = "CRM_SYNONYMS")]
    synonyms: PathBuf,

    /// KB snapshot (JSON lines). Without one the KB step is skipped.
    #[arg(long, env = "CRM_KB")]
    kb: Option<PathBuf>,

    /// Word vectors in text format. Required in embedding mode.
    #[arg(long, env = "CRM_EMBEDDINGS")]
    embeddings: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Clone)]
struct Overrides {
    /// `key = value` config file.
    #[arg(long, env = "CRM_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "CRM_ALPHA")]
    alpha: Option<f64>,
    #[arg(long, env = "CRM_LAMBDA")]
    lambda: Option<f64>,
    #[arg(long, env = "CRM_M_FLOOR")]
    m_floor: Option<usize>,
    #[arg(long, env = "CRM_SHRINK_BASE")]
    shrink_base: Option<usize>,
    #[arg(long, env = "CRM_RADIUS")]
    radius: Option<usize>,
    #[arg(long, env = "CRM_KB_THRESHOLD")]
    kb_threshold: Option<f64>,
    #[arg(long, env = "CRM_TOP_K_PERTURBATIONS")]
    top_k_perturbations: Option<usize>,
    /// `embedding` or `ranked_list`.
    #[arg(long, env = "CRM_REPR_KIND")]
    repr_kind: Option<ReprKind>,
    /// `cosine` or `pearson`.
    #[arg(long, env = "CRM_MEASURE")]
    measure: Option<SimilarityMeasure>,
    #[arg(long, env = "CRM_RANKED_LIST_CAP")]
    ranked_list_cap: Option<usize>,
}

impl Overrides {
    /// Defaults, then the config file, then environment and flags.
    fn resolve(&self) -> Result<ScoringConfig> {
        let mut cfg = ScoringConfig::default();
        if let Some(path) = &self.config {
            config::apply_file(&mut cfg, path)?;
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        take!(alpha, lambda, m_floor, shrink_base, radius, kb_threshold, top_k_perturbations, repr_kind, measure, ranked_list_cap);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct IndexCmd {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Phrase list, one per line.
    #[arg(long, required_unless_present = "dataset")]
    phrases: Option<PathBuf>,
    /// Index the phrases of this dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Also index every perturbation of every phrase.
    #[arg(long, env = "CRM_SYNONYMS")]
    synonyms: Option<PathBuf>,
    #[arg(long, env = "CRM_RADIUS", default_value_t = crm::corpus::DEFAULT_RADIUS)]
    radius: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreCmd {
    #[command(flatten)]
    res: Resources,
    #[arg(long)]
    phrase: String,
    /// Usage scenario text. Empty means no scenario.
    #[arg(long, default_value = "")]
    scenario: String,
}

#[derive(Args)]
struct DatasetCmd {
    #[command(flatten)]
    res: Resources,
    /// Rows of phrase, scenario, label; `.csv` is comma separated, anything else tab.
    #[arg(long)]
    dataset: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridCmd {
    #[command(flatten)]
    data: DatasetCmd,
    #[arg(long, default_value_t = 0.1)]
    alpha_step: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda_step: f64,
    #[arg(long, default_value_t = CorrelationMethod::Spearman)]
    method: CorrelationMethod,
}

#[derive(Args)]
struct PerturbCmd {
    #[arg(long)]
    phrase: String,
    #[arg(long, env = "CRM_SYNONYMS")]
    synonyms: PathBuf,
    /// Prune by frequency in this index.
    #[arg(long, env = "CRM_INDEX")]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = crm::perturbation::DEFAULT_TOP_K_PERTURBATIONS)]
    top_k: usize,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_phrase_list(path: &Path) -> Result<Vec<Phrase>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(Phrase::parse)
        .collect())
}

/// The phrases plus all of their perturbations.
fn with_perturbations(phrases: &[Phrase], synonyms: Option<&SynonymLexicon>) -> BTreeSet<Phrase> {
    let mut out: BTreeSet<Phrase> = phrases.iter().filter(|p| !p.is_empty()).cloned().collect();
    if let Some(lex) = synonyms {
        for p in phrases {
            if let Ok(perts) = generate_perturbations(p, lex) {
                out.extend(perts.into_iter().map(|x| x.words));
            }
        }
    }
    out
}

fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let dir = match format {
        CorpusFormat::Auto => path.is_dir(),
        CorpusFormat::Dir => true,
        CorpusFormat::Lines => false,
    };
    let load = if dir { Corpus::load_dir(path) } else { Corpus::load_lines(path) }
        .with_context(|| format!("loading corpus {}", path.display()))?;
    for e in &load.skipped {
        log::warn!("skipped: {e}");
    }
    if load.corpus.is_empty() {
        bail!("corpus {} has no documents", path.display());
    }
    log::info!("corpus: {} documents", load.corpus.len());
    Ok(load.corpus)
}

fn obtain_index(args: &CorpusArgs, phrases: &[Phrase], synonyms: &SynonymLexicon, radius: usize, exec: Execution) -> Result<WindowIndex> {
    match (&args.index, &args.corpus) {
        (Some(path), _) => {
            let index = WindowIndex::load(path).with_context(|| format!("loading index {}", path.display()))?;
            if index.radius() != radius {
                log::warn!("index radius {} overrides configured radius {radius}", index.radius());
            }
            Ok(index)
        }
        (None, Some(path)) => {
            let corpus = load_corpus(path, args.corpus_format)?;
            let wanted = with_perturbations(phrases, Some(synonyms));
            Ok(WindowIndex::build(&corpus, &wanted, radius, exec)?)
        }
        (None, None) => bail!("either --corpus or --index is required"),
    }
}

struct Loaded {
    index: WindowIndex,
    kb: KnowledgeBase,
    synonyms: SynonymLexicon,
    embeddings: Option<EmbeddingLexicon>,
    config: ScoringConfig,
    exec: Execution,
}

impl Loaded {
    fn new(res: &Resources, phrases: &[Phrase], exec: Execution) -> Result<Self> {
        let config = res.overrides.resolve()?;
        let synonyms = SynonymLexicon::load(&res.synonyms)
            .with_context(|| format!("loading synonyms {}", res.synonyms.display()))?;
        let kb = match &res.kb {
            Some(path) => {
                let load = KnowledgeBase::load(path).with_context(|| format!("loading KB {}", path.display()))?;
                if !load.warnings.is_empty() {
                    log::warn!("KB: {} records skipped", load.warnings.len());
                }
                load.kb
            }
            None => KnowledgeBase::empty(),
        };
        let embeddings = match &res.embeddings {
            Some(path) => Some(
                EmbeddingLexicon::load(path).with_context(|| format!("loading embeddings {}", path.display()))?,
            ),
            None if config.repr_kind == ReprKind::Embedding => {
                bail!("embedding mode needs --embeddings (or use --repr-kind ranked_list)")
            }
            None => None,
        };
        let index = obtain_index(&res.corpus, phrases, &synonyms, config.radius, exec)?;
        Ok(Loaded {
            index,
            kb,
            synonyms,
            embeddings,
            config,
            exec,
        })
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer::new(&self.index, &self.kb, &self.synonyms, self.embeddings.as_ref()).with_execution(self.exec)
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let ds = Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))?;
    if !ds.rejected.is_empty() {
        log::warn!("dataset: {} rows rejected", ds.rejected.len());
    }
    Ok(ds)
}

fn dataset_phrases(ds: &Dataset) -> Vec<Phrase> {
    let unique: BTreeSet<Phrase> = ds.instances.iter().map(|i| i.phrase.clone()).collect();
    unique.into_iter().collect()
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Index(cmd) => {
            let mut phrases = match &cmd.phrases {
                Some(p) => read_phrase_list(p)?,
                None => Vec::new(),
            };
            if let Some(d) = &cmd.dataset {
                phrases.extend(dataset_phrases(&load_dataset(d)?));
            }
            let synonyms = cmd.synonyms.as_deref().map(SynonymLexicon::load).transpose()?;
            let wanted = with_perturbations(&phrases, synonyms.as_ref());
            let Some(corpus) = &cmd.corpus.corpus else {
                bail!("index needs --corpus");
            };
            let corpus = load_corpus(corpus, cmd.corpus.corpus_format)?;
            let index = WindowIndex::build(&corpus, &wanted, cmd.radius, exec)?;
            index.save(&cmd.out)?;
            let seen = index.phrases().filter(|p| index.frequency(p) > 0).count();
            eprintln!(
                "indexed {} phrases ({seen} attested), {} windows -> {}",
                wanted.len(),
                index.total_windows(),
                cmd.out.display()
            );
        }
        Command::Score(cmd) => {
            let phrase = Phrase::parse(&cmd.phrase);
            let loaded = Loaded::new(&cmd.res, std::slice::from_ref(&phrase), exec)?;
            let result = loaded.scorer().score_phrase(&phrase, &cmd.scenario, &loaded.config)?;
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::Batch(cmd) => {
            let ds = load_dataset(&cmd.dataset)?;
            let loaded = Loaded::new(&cmd.res, &dataset_phrases(&ds), exec)?;
            let pairs = ds.pairs();
            let results = loaded.scorer().score_batch(&pairs, &loaded.config);
            let mut out = output(cmd.out.as_deref())?;
            let mut failed = 0;
            for ((phrase, scenario), r) in pairs.iter().zip(&results) {
                failed += usize::from(r.is_err());
                serde_json::to_writer(&mut out, &BatchRecord::new(phrase, scenario, r))?;
                writeln!(out)?;
            }
            out.flush()?;
            eprintln!("scored {} of {} instances", results.len() - failed, results.len());
        }
        Command::Evaluate(cmd) => {
            let ds = load_dataset(&cmd.dataset)?;
            let loaded = Loaded::new(&cmd.res, &dataset_phrases(&ds), exec)?;
            let (report, _) = evaluate(&ds, &loaded.scorer(), &loaded.config);
            let mut out = output(cmd.out.as_deref())?;
            serde_json::to_writer_pretty(&mut out, &serde_json::json!({
                "report": report,
                "config": loaded.config,
            }))?;
            writeln!(out)?;
            out.flush()?;
        }
        Command::Grid(cmd) => {
            let ds = load_dataset(&cmd.data.dataset)?;
            let loaded = Loaded::new(&cmd.data.res, &dataset_phrases(&ds), exec)?;
            let grid = grid_search(&ds, &loaded.scorer(), &loaded.config, cmd.alpha_step, cmd.lambda_step, cmd.method)?;
            let mut out = output(cmd.data.out.as_deref())?;
            out.write_all(grid.to_csv().as_bytes())?;
            out.flush()?;
            if grid.prepared < grid.instances {
                log::warn!("{} of {} instances could not be scored", grid.instances - grid.prepared, grid.instances);
            }
            match &grid.best {
                Some(b) => eprintln!("best {}: alpha={} lambda={} rho={:.4}", grid.method, b.alpha, b.lambda, b.rho),
                None => eprintln!("no grid cell produced a correlation"),
            }
        }
        Command::Perturb(cmd) => {
            let phrase = Phrase::parse(&cmd.phrase);
            let synonyms = SynonymLexicon::load(&cmd.synonyms)?;
            let index = cmd.index.as_deref().map(WindowIndex::load).transpose()?;
            let all = generate_perturbations(&phrase, &synonyms)?;
            let kept = match &index {
                Some(ix) => crm::perturbation::prune_by_frequency(&all, |p| ix.frequency(p), cmd.top_k),
                None => all.clone(),
            };
            for p in &kept {
                let freq = index.as_ref().map(|ix| ix.frequency(&p.words));
                println!(
                    "{}",
                    serde_json::json!({
                        "phrase": p.words.to_string(),
                        "substituted_index": p.substituted_index,
                        "source_synonym": p.source_synonym,
                        "frequency": freq,
                    })
                );
            }
            eprintln!("{} generated, {} kept", all.len(), kept.len());
        }
        Command::Stats { dataset } => {
            let ds = load_dataset(&dataset)?;
            let s = ds.stats();
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "contexts": s.contexts,
                    "unique_phrases": s.unique_phrases,
                    "contexts_per_phrase": s.contexts_per_phrase,
                    "histogram": s.histogram,
                    "rejected_rows": ds.rejected.len(),
                }))?
            );
        }
        Command::Config { overrides } => {
            print!("{}", config::render(&overrides.resolve()?));
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
