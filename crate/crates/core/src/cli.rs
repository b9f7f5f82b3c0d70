//! Command-line front end: `train`, `parse`, `pipeline`, `evaluate`, `stats`
//! and `import-scidtb`.
//!
//! Settings resolve as flag, then `--config` file entry, then default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use rayon::prelude::*;

use crate::classifier::TrainConfig;
use crate::eval::{ablation_report, cumulative_grid, evaluate};
use crate::parser::{parse_document, random_parse, train_parser, ParserModel};
use crate::pipeline::{run_pipeline_traced, AdapterKind, PipelineConfig};
use crate::treebank::{
    corpus_files, corpus_stats, document_file_name, import_scidtb, load_corpus, save_document, DiscourseTree,
    Granularity,
};

/// Exit status when some documents failed and the rest were written.
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ddparse", version, about = "Discourse dependency parsing toolkit")]
pub struct Cli {
    /// Flat key=value settings file; flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a parser model on an annotated corpus.
    Train(TrainArgs),
    /// Parse every document of a corpus.
    Parse(ParseArgs),
    /// Parse source-language documents through translation.
    Pipeline(PipelineArgs),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
    /// Corpus statistics and relation frequencies.
    Stats(StatsArgs),
    /// Convert SciDTB `.dep` files into the corpus format.
    ImportScidtb(ImportArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub granularity: Option<Granularity>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random baseline instead of the model.
    #[arg(long)]
    pub random: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AdapterArgs {
    #[arg(long)]
    pub adapter: Option<AdapterKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the HTTP API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub dict_file: Option<PathBuf>,
    /// Append-only translation cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, overrides_with = "no_punct_fix")]
    pub punct_fix: bool,
    #[arg(long)]
    pub no_punct_fix: bool,
    #[arg(long, overrides_with = "no_pronoun_fix")]
    pub pronoun_fix: bool,
    #[arg(long)]
    pub no_pronoun_fix: bool,
    #[arg(long, overrides_with = "no_two_part")]
    pub two_part: bool,
    #[arg(long)]
    pub no_two_part: bool,
    /// Topic cue words, one per line.
    #[arg(long, value_name = "FILE")]
    pub topic_cues: Option<PathBuf>,
    /// Comma-separated relative pronouns and subordinators.
    #[arg(long, value_delimiter = ',')]
    pub relative_pronouns: Option<Vec<String>>,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub target_lang: Option<String>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the edited translations here.
    #[arg(long)]
    pub translations_out: Option<PathBuf>,
    #[command(flatten)]
    pub adapter: AdapterArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub granularity: Option<Granularity>,
    /// Write the report as JSON.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    /// Run the cumulative ablation grid of the pipeline over `--gold`.
    #[arg(long)]
    pub ablate: bool,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub adapter: AdapterArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Write the statistics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Directory of SciDTB `.dep` files.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

const CONFIG_KEYS: &[&str] = &[
    "corpus",
    "model",
    "out",
    "seed",
    "granularity",
    "jobs",
    "epochs",
    "learning_rate",
    "l2",
    "pred",
    "gold",
    "report_json",
    "adapter",
    "endpoint",
    "api_key_env",
    "dict_file",
    "cache",
    "punct_fix",
    "pronoun_fix",
    "two_part",
    "topic_cues",
    "relative_pronouns",
    "source_lang",
    "target_lang",
];

/// Parsed `key=value` settings file. Blank lines and `#` comments are ignored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key=value", n + 1))?;
            let key = key.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key '{key}'", n + 1);
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key {key}: {e}")))
            .transpose()
    }

    fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.values
            .get(key)
            .map(|v| match v.to_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                other => Err(anyhow!("config key {key}: '{other}' is not a boolean")),
            })
            .transpose()
    }
}

/// `flag`, else the config value, else `default`.
fn resolve<T: FromStr>(flag: Option<T>, config: &ConfigFile, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    Ok(match flag {
        Some(v) => v,
        None => config.get(key)?.unwrap_or(default),
    })
}

fn required<T: FromStr>(flag: Option<T>, config: &ConfigFile, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => config
            .get(key)?
            .ok_or_else(|| anyhow!("missing --{}", key.replace('_', "-"))),
    }
}

fn toggle(on: bool, off: bool, config: &ConfigFile, key: &str) -> Result<bool> {
    Ok(if on {
        true
    } else if off {
        false
    } else {
        config.get_bool(key)?.unwrap_or(true)
    })
}

fn read_cues(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading topic cues {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect())
}

fn pipeline_config(args: &AdapterArgs, config: &ConfigFile) -> Result<PipelineConfig> {
    let defaults = PipelineConfig::default();
    let mut pc = PipelineConfig {
        enable_punct_fix: toggle(args.punct_fix, args.no_punct_fix, config, "punct_fix")?,
        enable_pronoun_fix: toggle(args.pronoun_fix, args.no_pronoun_fix, config, "pronoun_fix")?,
        enable_two_part: toggle(args.two_part, args.no_two_part, config, "two_part")?,
        source_lang: resolve(
            args.source_lang.clone(),
            config,
            "source_lang",
            defaults.source_lang.clone(),
        )?,
        target_lang: resolve(
            args.target_lang.clone(),
            config,
            "target_lang",
            defaults.target_lang.clone(),
        )?,
        cache_path: args.cache.clone().or(config.get("cache")?),
        ..defaults
    };
    pc.adapter.kind = resolve(args.adapter, config, "adapter", AdapterKind::default())?;
    pc.adapter.endpoint = args.endpoint.clone().or(config.get("endpoint")?);
    pc.adapter.api_key_env = args.api_key_env.clone().or(config.get("api_key_env")?);
    pc.adapter.dict_file = args.dict_file.clone().or(config.get("dict_file")?);
    if let Some(path) = args.topic_cues.clone().or(config.get("topic_cues")?) {
        pc.topic_cues = read_cues(&path)?;
    }
    if let Some(list) = &args.relative_pronouns {
        pc.relative_pronouns = list.clone();
    } else if let Some(list) = config.get::<String>("relative_pronouns")? {
        pc.relative_pronouns = list
            .split(',')
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect();
    }
    Ok(pc)
}

fn load_nonempty_corpus(dir: &Path) -> Result<Vec<DiscourseTree>> {
    if corpus_files(dir)
        .with_context(|| format!("reading corpus {}", dir.display()))?
        .is_empty()
    {
        bail!("no documents in {}", dir.display());
    }
    Ok(load_corpus(dir)?)
}

fn load_model(path: &Path) -> Result<ParserModel> {
    ParserModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Writes documents one at a time in input order.
fn write_corpus(docs: &[DiscourseTree], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for doc in docs {
        save_document(doc, &dir.join(document_file_name(doc)))?;
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs, config: &ConfigFile) -> Result<ExitCode> {
    let corpus_dir: PathBuf = required(args.corpus.clone(), config, "corpus")?;
    let model_path: PathBuf = required(args.model.clone(), config, "model")?;
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        epochs: resolve(args.epochs, config, "epochs", defaults.epochs)?,
        learning_rate: resolve(args.learning_rate, config, "learning_rate", defaults.learning_rate)?,
        l2: resolve(args.l2, config, "l2", defaults.l2)?,
        seed: resolve(args.seed, config, "seed", defaults.seed)?,
    };
    let granularity = resolve(args.granularity, config, "granularity", Granularity::default())?;
    let corpus = load_nonempty_corpus(&corpus_dir)?;
    let (model, summary) = train_parser(&corpus, &train, granularity)?;
    model.save(&model_path)?;
    println!("documents                {}", summary.n_docs);
    println!("skipped non-projective   {}", summary.skipped_non_projective.len());
    for id in &summary.skipped_non_projective {
        println!("  {id}");
    }
    println!("action examples          {}", summary.n_action_examples);
    println!("relation examples        {}", summary.n_relation_examples);
    println!("relation labels          {} ({granularity})", summary.n_relation_labels);
    println!("model written to {}", model_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_parse(args: &ParseArgs, config: &ConfigFile) -> Result<ExitCode> {
    let corpus_dir: PathBuf = required(args.corpus.clone(), config, "corpus")?;
    let out: PathBuf = required(args.out.clone(), config, "out")?;
    let seed = resolve(args.seed, config, "seed", 42u64)?;
    let model = if args.random {
        None
    } else {
        Some(load_model(&required::<PathBuf>(args.model.clone(), config, "model")?)?)
    };
    let docs: Vec<DiscourseTree> = load_nonempty_corpus(&corpus_dir)?
        .iter()
        .map(|d| d.stripped())
        .collect();
    let parsed = docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| match &model {
            Some(m) => parse_document(doc, m),
            None => random_parse(&doc.edus, seed.wrapping_add(i as u64)).map(|mut t| {
                t.doc_id = doc.doc_id.clone();
                t
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_corpus(&parsed, &out)?;
    println!("parsed {} documents into {}", parsed.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_pipeline(args: &PipelineArgs, config: &ConfigFile) -> Result<ExitCode> {
    let corpus_dir: PathBuf = required(args.corpus.clone(), config, "corpus")?;
    let out: PathBuf = required(args.out.clone(), config, "out")?;
    let model = load_model(&required::<PathBuf>(args.model.clone(), config, "model")?)?;
    let pc = pipeline_config(&args.adapter, config)?;
    let adapter = pc.build_adapter()?;
    let docs = load_nonempty_corpus(&corpus_dir)?;
    let results: Vec<_> = docs
        .par_iter()
        .map(|doc| run_pipeline_traced(&doc.stripped(), &pc, &model, adapter.as_ref()))
        .collect();
    let mut failed = 0;
    let mut trees = Vec::new();
    let mut translations = Vec::new();
    for (doc, result) in docs.iter().zip(results) {
        match result {
            Ok(run) => {
                translations.push(DiscourseTree::unannotated(doc.doc_id.clone(), run.translations));
                trees.push(run.tree);
            }
            Err(e) => {
                error!("skipping {}: {e}", doc.doc_id);
                eprintln!("skipped {}: {e}", doc.doc_id);
                failed += 1;
            }
        }
    }
    write_corpus(&trees, &out)?;
    if let Some(dir) = &args.translations_out {
        write_corpus(&translations, dir)?;
    }
    println!(
        "parsed {} documents into {}; {failed} skipped",
        trees.len(),
        out.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PARTIAL)
    })
}

fn cmd_evaluate(args: &EvaluateArgs, config: &ConfigFile) -> Result<ExitCode> {
    let gold_dir: PathBuf = required(args.gold.clone(), config, "gold")?;
    let granularity = resolve(args.granularity, config, "granularity", Granularity::default())?;
    let golds = load_nonempty_corpus(&gold_dir)?;
    let report_json = args.report_json.clone().or(config.get("report_json")?);
    let json = if args.ablate {
        let model = load_model(&required::<PathBuf>(args.model.clone(), config, "model")?)?;
        let pc = pipeline_config(&args.adapter, config)?;
        let adapter = pc.build_adapter()?;
        let report = ablation_report(&golds, &model, adapter.as_ref(), &cumulative_grid(&pc), granularity)?;
        print!("{report}");
        serde_json::to_string_pretty(&report)?
    } else {
        let pred_dir: PathBuf = required(args.pred.clone(), config, "pred")?;
        let preds = load_nonempty_corpus(&pred_dir)?;
        let report = evaluate(&preds, &golds, granularity)?;
        print!("{report}");
        serde_json::to_string_pretty(&report)?
    };
    if let Some(path) = report_json {
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        info!("report written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stats(args: &StatsArgs, config: &ConfigFile) -> Result<ExitCode> {
    let corpus_dir: PathBuf = required(args.corpus.clone(), config, "corpus")?;
    let stats = corpus_stats(&load_nonempty_corpus(&corpus_dir)?)?;
    print!("{stats}");
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&stats)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_import(args: &ImportArgs) -> Result<ExitCode> {
    let mut files: Vec<PathBuf> = fs::read_dir(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "dep"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no documents (*.dep) in {}", args.input.display());
    }
    let mut docs = Vec::new();
    let mut failed = 0;
    for path in &files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let doc_id = name.split('.').next().unwrap_or(name);
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        match import_scidtb(&text, doc_id) {
            Ok(doc) => docs.push(doc),
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                eprintln!("skipped {}: {e}", path.display());
                failed += 1;
            }
        }
    }
    write_corpus(&docs, &args.out)?;
    println!(
        "imported {} documents into {}; {failed} skipped",
        docs.len(),
        args.out.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PARTIAL)
    })
}

/// Runs one command; errors are reported by the caller.
pub fn run(cli: &Cli) -> Result<ExitCode> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let jobs: Option<usize> = cli.jobs.or(config.get("jobs")?);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    pool.install(|| match &cli.command {
        Command::Train(a) => cmd_train(a, &config),
        Command::Parse(a) => cmd_parse(a, &config),
        Command::Pipeline(a) => cmd_pipeline(a, &config),
        Command::Evaluate(a) => cmd_evaluate(a, &config),
        Command::Stats(a) => cmd_stats(a, &config),
        Command::ImportScidtb(a) => cmd_import(a),
    })
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

/// Parses arguments, runs, and maps errors to exit status 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
