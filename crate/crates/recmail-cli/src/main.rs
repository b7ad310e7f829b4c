//! Command-line entry point for the email generation pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use recmail::composer::{generate, GeneratedEmail, GenerationConfig};
use recmail::evalkit::{
    average_sentence_bleu, bleu, bleu_tokenize, summarize_study, Corpus, TaskLog,
};
use recmail::model::{CandidateProfile, JobPosting};
use recmail::taxonomy::{ingest_taxonomy, QualificationTaxonomy};
use recmail::template::{
    build_library, load_library, save_library, AnnotatedTemplate, ComponentLibrary,
    ComponentRegistry,
};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "recmail", about = "Template-based recruitment email generation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse annotated templates into a component library file
    BuildLibrary {
        /// Directory of annotated template files
        #[arg(long)]
        templates: PathBuf,
        /// Optional JSON component registry overriding the built-in set
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Output path for the serialized library
        #[arg(long)]
        out: PathBuf,
        /// Skip templates that fail a Danish word-frequency heuristic
        #[arg(long)]
        skip_non_danish: bool,
        /// Minimum share of common Danish words for --skip-non-danish
        #[arg(long, default_value_t = 0.05)]
        danish_threshold: f64,
    },
    /// Generate one email for a (job, candidate) pair
    Generate {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        /// Wrap case-specific insertions in {}
        #[arg(long)]
        mark_fills: bool,
    },
    /// Generate emails for a JSONL file of {"job":…, "candidate":…} pairs
    Batch {
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Worker threads (1 = serial)
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        mark_fills: bool,
    },
    /// Evaluation utilities
    Eval {
        #[command(subcommand)]
        mode: EvalMode,
    },
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    library: PathBuf,
    #[arg(long)]
    taxonomy: PathBuf,
    /// Generation config JSON; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum EvalMode {
    /// BLEU over a JSONL file of {"hyp": string, "refs": [string]}
    Bleu {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        /// average: mean of smoothed per-sentence scores; corpus: strict corpus BLEU
        #[arg(long, default_value = "average")]
        mode: BleuMode,
    },
    /// Study-log aggregation over a JSONL file of task records
    Study {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BleuMode {
    Average,
    Corpus,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildLibrary {
            templates,
            registry,
            out,
            skip_non_danish,
            danish_threshold,
        } => cmd_build_library(&templates, registry.as_deref(), &out, skip_non_danish, danish_threshold),
        Command::Generate {
            job,
            candidate,
            pipeline,
            format,
            mark_fills,
        } => cmd_generate(&job, &candidate, &pipeline, format, mark_fills),
        Command::Batch {
            pairs,
            pipeline,
            jobs,
            mark_fills,
        } => cmd_batch(&pairs, &pipeline, jobs, mark_fills),
        Command::Eval { mode } => match mode {
            EvalMode::Bleu { input, max_n, mode } => cmd_eval_bleu(&input, max_n, mode),
            EvalMode::Study { input } => cmd_eval_study(&input),
        },
    }
}

/// Share of whitespace-separated words that are common Danish function
/// words; a crude language filter for unlabeled corpora.
fn danish_word_share(text: &str) -> f64 {
    const COMMON: &[&str] = &[
        "og", "vi", "du", "en", "et", "til", "med", "er", "på", "din", "dig", "hos", "som",
        "der", "det", "at", "har", "for", "kan", "ikke", "hej", "kære",
    ];
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    if words.is_empty() {
        return 0.0;
    }
    let hits = words.iter().filter(|w| COMMON.contains(&w.as_str())).count();
    hits as f64 / words.len() as f64
}

fn load_templates(dir: &Path) -> Result<Vec<AnnotatedTemplate>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading template dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut templates = Vec::new();
    for path in paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("template")
            .to_string();
        let markup = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        let template = AnnotatedTemplate::from_markup(id, &markup)
            .with_context(|| format!("parsing {}", path.display()))?;
        templates.push(template);
    }
    Ok(templates)
}

fn cmd_build_library(
    template_dir: &Path,
    registry_file: Option<&Path>,
    out: &Path,
    skip_non_danish: bool,
    danish_threshold: f64,
) -> Result<ExitCode> {
    let registry = match registry_file {
        Some(path) => ComponentRegistry::from_json(&fs::read_to_string(path)?)?,
        None => ComponentRegistry::default_set(),
    };
    let mut templates = load_templates(template_dir)?;
    if templates.is_empty() {
        bail!("no template files in {}", template_dir.display());
    }
    if skip_non_danish {
        templates.retain(|t| {
            let keep = danish_word_share(&t.markup) >= danish_threshold;
            if !keep {
                eprintln!("skipping non-Danish template {}", t.id);
            }
            keep
        });
    }
    let library = build_library(&templates, &registry)?;
    fs::write(out, save_library(&library))
        .with_context(|| format!("writing {}", out.display()))?;
    let counts: BTreeMap<&str, usize> = library
        .entries
        .iter()
        .map(|(name, contents)| (name.as_str(), contents.len()))
        .collect();
    for (name, count) in &counts {
        println!("{name}: {count}");
    }
    println!(
        "company templates: {}",
        library.company_templates.values().map(Vec::len).sum::<usize>()
    );
    Ok(ExitCode::SUCCESS)
}

struct Pipeline {
    library: ComponentLibrary,
    taxonomy: QualificationTaxonomy,
    config: GenerationConfig,
}

fn load_pipeline(args: &PipelineArgs, mark_fills: bool) -> Result<Pipeline> {
    let library = load_library(&fs::read(&args.library)?)?;
    let taxonomy = ingest_taxonomy(&fs::read_to_string(&args.taxonomy)?)?;
    let mut config = match &args.config {
        Some(path) => GenerationConfig::from_json(&fs::read_to_string(path)?)?,
        None => GenerationConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.mark_fills = mark_fills;
    Ok(Pipeline {
        library,
        taxonomy,
        config,
    })
}

fn email_json(email: &GeneratedEmail) -> serde_json::Value {
    json!({
        "schema": SCHEMA_VERSION,
        "body": email.body,
        "template_source": email.template_source,
        "fills": email.fills,
        "seed": email.seed,
        "trace": email.trace,
    })
}

fn cmd_generate(
    job_file: &Path,
    candidate_file: &Path,
    pipeline_args: &PipelineArgs,
    format: OutputFormat,
    mark_fills: bool,
) -> Result<ExitCode> {
    let pipeline = load_pipeline(pipeline_args, mark_fills)?;
    let (job, candidate) = recmail::model::load_pair(
        &fs::read_to_string(job_file)?,
        &fs::read_to_string(candidate_file)?,
    )?;
    let email = generate(
        &job,
        &candidate,
        &pipeline.library,
        &pipeline.taxonomy,
        &pipeline.config,
    )?;
    match format {
        OutputFormat::Text => println!("{}", email.body),
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&email_json(&email))?),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct PairLine {
    job: JobPosting,
    candidate: CandidateProfile,
}

#[derive(Serialize)]
#[serde(untagged)]
enum BatchResult {
    Ok(serde_json::Value),
    Err { schema: u32, index: usize, error: String },
}

/// splitmix64, used to spread the pair index over the seed space.
fn mix_index(index: u64) -> u64 {
    let mut z = index.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-item seed: base seed XOR a hash of the line index.
fn derive_seed(base: u64, index: usize) -> u64 {
    base ^ mix_index(index as u64)
}

fn cmd_batch(
    pairs_file: &Path,
    pipeline_args: &PipelineArgs,
    jobs: usize,
    mark_fills: bool,
) -> Result<ExitCode> {
    let pipeline = load_pipeline(pipeline_args, mark_fills)?;
    let raw = fs::read_to_string(pairs_file)?;
    let lines: Vec<&str> = raw.lines().filter(|l| !l.trim().is_empty()).collect();

    let process = |(index, line): (usize, &&str)| -> BatchResult {
        let run = || -> Result<serde_json::Value> {
            let pair: PairLine = serde_json::from_str(line)?;
            let config = GenerationConfig {
                seed: derive_seed(pipeline.config.seed, index),
                ..pipeline.config.clone()
            };
            let email = generate(&pair.job, &pair.candidate, &pipeline.library, &pipeline.taxonomy, &config)?;
            let mut value = email_json(&email);
            value["index"] = json!(index);
            value["job_id"] = json!(pair.job.id);
            value["candidate_id"] = json!(pair.candidate.id);
            Ok(value)
        };
        match run() {
            Ok(value) => BatchResult::Ok(value),
            Err(err) => BatchResult::Err {
                schema: SCHEMA_VERSION,
                index,
                error: format!("{err:#}"),
            },
        }
    };

    let results: Vec<BatchResult> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        pool.install(|| lines.par_iter().enumerate().map(process).collect())
    } else {
        lines.iter().enumerate().map(process).collect()
    };

    let mut failed = false;
    for result in &results {
        if matches!(result, BatchResult::Err { .. }) {
            failed = true;
        }
        println!("{}", serde_json::to_string(result)?);
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

#[derive(Deserialize)]
struct BleuLine {
    hyp: String,
    refs: Vec<String>,
}

fn cmd_eval_bleu(input: &Path, max_n: usize, mode: BleuMode) -> Result<ExitCode> {
    let raw = fs::read_to_string(input)?;
    let mut pairs = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: BleuLine =
            serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?;
        if parsed.refs.is_empty() {
            bail!("line {}: no references", i + 1);
        }
        pairs.push((
            bleu_tokenize(&parsed.hyp),
            parsed.refs.iter().map(|r| bleu_tokenize(r)).collect(),
        ));
    }
    let corpus = Corpus { pairs };
    let (mode_name, score) = match mode {
        BleuMode::Average => ("average", average_sentence_bleu(&corpus, max_n, true)?),
        BleuMode::Corpus => ("corpus", bleu(&corpus, max_n)?),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "schema": SCHEMA_VERSION,
            "metric": "bleu",
            "mode": mode_name,
            "max_n": max_n,
            "pairs": corpus.pairs.len(),
            "score": score,
        }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval_study(input: &Path) -> Result<ExitCode> {
    let raw = fs::read_to_string(input)?;
    let mut logs: Vec<TaskLog> = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        logs.push(serde_json::from_str(line).with_context(|| format!("line {}", i + 1))?);
    }
    let summary = summarize_study(&logs)?;
    let mut value = serde_json::to_value(&summary)?;
    value["schema"] = json!(SCHEMA_VERSION);
    value["logs"] = json!(logs.len());
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(ExitCode::SUCCESS)
}
