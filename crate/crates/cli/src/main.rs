//! `nr`: annotate CoNLL-U with HPO phenotypes from numbers, score the
//! output, and build the resources the annotator needs.

mod config;
mod parse_service;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use nr_core::assignment::{DocumentReport, Linker, Pipeline};
use nr_core::embedding::{
    load_lexicon, nearest_entities, reference_embeddings_for, save_lexicon, train_lexicon, TrainConfig,
};
use nr_core::evaluation::{
    evaluate_exact, evaluate_generalized, format_table, read_labels, EvalError, LabeledSet, MatchMode, MetricsReport,
};
use nr_core::extraction::{load_exclusions, parse_conllu, Document, ExclusionDict};
use nr_core::knowledge::{load_kb, load_synonym_table, parse_kb, validate_kb, KbError, NumericEntity};
use nr_core::linking::DEFAULT_THRESHOLD;
use nr_core::ontology::parse_ontology;

use config::{resolve_threshold, ConfigFile, THRESHOLD_ENV};

#[derive(Parser)]
#[command(name = "nr", version, about = "Numerical reasoning over clinical text: numbers to HPO phenotypes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate CoNLL-U (or raw text through a parse service) as JSONL.
    Annotate(AnnotateArgs),
    /// Score predicted annotations against gold with micro P/R/F1.
    Evaluate(EvaluateArgs),
    /// Knowledge-base checks.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Train or inspect token lexicons.
    Embed {
        #[command(subcommand)]
        command: EmbedCommand,
    },
}

#[derive(Subcommand)]
enum KbCommand {
    /// Check every KB invariant and list violations.
    Validate {
        #[arg(long)]
        kb: PathBuf,
        /// Also require every HPO id to exist in this ontology.
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EmbedCommand {
    /// Fit a lexicon to a synonym file and write it in the binary format.
    Train(TrainArgs),
    /// Rank entities by cosine to a phrase.
    Nearest {
        #[arg(long)]
        lexicon: PathBuf,
        /// KB or synonym file providing the entity names.
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, short = 'k', default_value_t = 3)]
        top: usize,
        phrase: String,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LinkerArg {
    Embedding,
    Shallow,
}

#[derive(Args)]
struct AnnotateArgs {
    /// Optional key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// CoNLL-U file, or raw text with --parse-service; `-` reads stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Minimum cosine for a link, in (0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    linker: Option<LinkerArg>,
    /// Drop in-range (negated) annotations.
    #[arg(long)]
    suppress_negated: bool,
    /// Worker threads across documents.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base URL of a service answering POST /parse with CoNLL-U.
    #[arg(long)]
    parse_service: Option<String>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Generalized,
    Both,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Needed for generalized matching.
    #[arg(long)]
    ontology: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Match on (doc, HPO id) only.
    #[arg(long)]
    ignore_polarity: bool,
    /// Print JSON lines instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// File with #ENTITIES and #SYNONYMS sections.
    #[arg(long)]
    synonyms: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    negative_ratio: Option<usize>,
}

/// An error with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult = Result<(), Failure>;

const INVALID: u8 = 1;
const RESOURCE: u8 = 2;

trait ExitWith<T> {
    fn or_exit(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn fail<T>(code: u8, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        code,
        error: anyhow!(msg.into()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Annotate(a) => cmd_annotate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Kb {
            command: KbCommand::Validate { kb, ontology },
        } => cmd_kb_validate(&kb, ontology.as_deref()),
        Command::Embed {
            command: EmbedCommand::Train(a),
        } => cmd_embed_train(a),
        Command::Embed {
            command: EmbedCommand::Nearest { lexicon, kb, top, phrase },
        } => cmd_embed_nearest(&lexicon, &kb, top, &phrase),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", render(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The cause chain joined by `: `, skipping causes a wrapper already printed.
fn render(error: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in error.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    match path {
        Some(p) => ConfigFile::load(p).or_exit(RESOURCE),
        None => Ok(ConfigFile::default()),
    }
}

fn required(flag: Option<PathBuf>, cfg: &ConfigFile, key: &str) -> Result<PathBuf, Failure> {
    match flag.or_else(|| cfg.path(key)) {
        Some(p) => Ok(p),
        None => fail(RESOURCE, format!("missing --{key}")),
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).or_exit(RESOURCE)?;
        return Ok(s);
    }
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read input {}", path.display()))
        .or_exit(RESOURCE)
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("cannot write {}", p.display()))
                .or_exit(RESOURCE)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// True when some line looks like a CoNLL-U token row.
fn looks_like_conllu(text: &str) -> bool {
    text.lines().any(|l| {
        let cols: Vec<&str> = l.split('\t').collect();
        cols.len() == 10 && cols[0].chars().next().is_some_and(|c| c.is_ascii_digit())
    })
}

/// Raw text: one document per non-empty line, optionally `doc_id<TAB>text`.
fn raw_documents(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| match l.split_once('\t') {
            Some((id, body)) => (id.trim().to_string(), body.trim().to_string()),
            None => (format!("doc{}", i + 1), l.trim().to_string()),
        })
        .collect()
}

fn cmd_annotate(a: AnnotateArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref())?;
    let env = std::env::var(THRESHOLD_ENV).ok();
    let threshold = resolve_threshold(a.threshold, &cfg, env.as_deref(), DEFAULT_THRESHOLD).or_exit(INVALID)?;
    let linker_mode = match a.linker {
        Some(l) => l,
        None => match cfg.get("linker") {
            None | Some("embedding") => LinkerArg::Embedding,
            Some("shallow") => LinkerArg::Shallow,
            Some(other) => return fail(INVALID, format!("config linker: unknown mode {other:?}")),
        },
    };
    let suppress = a.suppress_negated || cfg.flag("suppress-negated").or_exit(INVALID)?;
    let jobs = match a.jobs {
        Some(j) => j,
        None => cfg.parsed("jobs").or_exit(INVALID)?.unwrap_or(1),
    };
    if jobs == 0 {
        return fail(INVALID, "--jobs must be at least 1");
    }
    let parse_service = a.parse_service.or_else(|| cfg.get("parse-service").map(str::to_string));

    let kb_path = required(a.kb, &cfg, "kb")?;
    let kb = load_kb(&kb_path)
        .with_context(|| format!("knowledge base {}", kb_path.display()))
        .or_exit(RESOURCE)?;
    let onto_path = required(a.ontology, &cfg, "ontology")?;
    let ontology = parse_ontology(&onto_path)
        .with_context(|| format!("ontology {}", onto_path.display()))
        .or_exit(RESOURCE)?;
    let linker = match linker_mode {
        LinkerArg::Shallow => Linker::Shallow,
        LinkerArg::Embedding => {
            let p = required(a.lexicon, &cfg, "lexicon")?;
            let lex = load_lexicon(&p)
                .with_context(|| format!("lexicon {}", p.display()))
                .or_exit(RESOURCE)?;
            Linker::embedding(lex, &kb)
        }
    };
    let exclusions = match a.exclusions.or_else(|| cfg.path("exclusions")) {
        Some(p) => load_exclusions(&p)
            .with_context(|| format!("exclusions {}", p.display()))
            .or_exit(RESOURCE)?,
        None => ExclusionDict::default(),
    };
    let mut pipeline = Pipeline::new(kb, ontology, linker, exclusions)
        .or_exit(RESOURCE)?
        .with_threshold(threshold);
    pipeline.suppress_negated = suppress;

    let input_path = required(a.input, &cfg, "input")?;
    let text = read_input(&input_path)?;
    let docs: Vec<Document> = if looks_like_conllu(&text) || text.trim().is_empty() {
        parse_conllu(&text)
            .with_context(|| format!("input {}", input_path.display()))
            .or_exit(RESOURCE)?
    } else if let Some(url) = &parse_service {
        raw_documents(&text)
            .iter()
            .map(|(id, body)| parse_service::parse_remote(url, id, body))
            .collect::<anyhow::Result<_>>()
            .or_exit(RESOURCE)?
    } else {
        return fail(
            RESOURCE,
            format!(
                "{} is not CoNLL-U; parse it first or pass --parse-service URL to have raw text parsed",
                input_path.display()
            ),
        );
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .or_exit(RESOURCE)?;
    // collect() on an indexed parallel iterator keeps input order
    let reports: Vec<DocumentReport> = pool
        .install(|| {
            docs.par_iter()
                .map(|d| pipeline.annotate_document(d))
                .collect::<Result<_, _>>()
        })
        .or_exit(INVALID)?;

    let mut out = output_writer(a.output.as_deref())?;
    let (mut numbers, mut linked, mut annotated, mut skipped) = (0, 0, 0, 0);
    for r in &reports {
        numbers += r.numbers;
        linked += r.linked;
        skipped += r.skipped;
        annotated += r.annotations.len();
        for ann in &r.annotations {
            let line = serde_json::to_string(ann).or_exit(RESOURCE)?;
            writeln!(out, "{line}").or_exit(RESOURCE)?;
        }
    }
    out.flush().or_exit(RESOURCE)?;
    eprintln!(
        "documents={} numbers={numbers} linked={linked} annotated={annotated} skipped={skipped}",
        docs.len()
    );
    Ok(())
}

fn read_label_file(path: &Path) -> Result<LabeledSet, Failure> {
    let f = File::open(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .or_exit(RESOURCE)?;
    read_labels(BufReader::new(f))
        .with_context(|| format!("{}", path.display()))
        .or_exit(RESOURCE)
}

fn cmd_evaluate(a: EvaluateArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref())?;
    let gold_path = required(a.gold, &cfg, "gold")?;
    let pred_path = required(a.pred, &cfg, "pred")?;
    let ignore_polarity = a.ignore_polarity || cfg.flag("ignore-polarity").or_exit(INVALID)?;
    let mode = match a.mode {
        Some(m) => m,
        None => match cfg.get("mode") {
            None | Some("both") => ModeArg::Both,
            Some("exact") => ModeArg::Exact,
            Some("generalized") => ModeArg::Generalized,
            Some(other) => return fail(INVALID, format!("config mode: unknown mode {other:?}")),
        },
    };

    let mut gold = read_label_file(&gold_path)?;
    let mut pred = read_label_file(&pred_path)?;
    if ignore_polarity {
        gold = gold.without_polarity();
        pred = pred.without_polarity();
    }

    let mut reports = Vec::new();
    if mode != ModeArg::Generalized {
        reports.push(MetricsReport {
            mode: MatchMode::Exact,
            metrics: evaluate_exact(&gold, &pred),
        });
    }
    if mode != ModeArg::Exact {
        let Some(onto_path) = a.ontology.or_else(|| cfg.path("ontology")) else {
            return fail(RESOURCE, "generalized matching needs --ontology");
        };
        let ontology = parse_ontology(&onto_path)
            .with_context(|| format!("ontology {}", onto_path.display()))
            .or_exit(RESOURCE)?;
        let metrics = evaluate_generalized(&gold, &pred, &ontology).map_err(|e| match e {
            EvalError::UnknownHpo(_) => Failure {
                code: RESOURCE,
                error: e.into(),
            },
            other => Failure {
                code: INVALID,
                error: other.into(),
            },
        })?;
        reports.push(MetricsReport {
            mode: MatchMode::Generalized,
            metrics,
        });
    }

    let mut out = io::stdout().lock();
    if a.json {
        for r in &reports {
            writeln!(out, "{}", serde_json::to_string(r).or_exit(RESOURCE)?).or_exit(RESOURCE)?;
        }
    } else {
        write!(out, "{}", format_table(&reports)).or_exit(RESOURCE)?;
    }
    Ok(())
}

fn cmd_kb_validate(path: &Path, ontology: Option<&Path>) -> CmdResult {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .or_exit(RESOURCE)?;
    let kb = parse_kb(&text).map_err(|e| Failure {
        code: if matches!(e, KbError::Io(_)) { RESOURCE } else { INVALID },
        error: anyhow!("{}: {e}", path.display()),
    })?;
    let mut lines: Vec<String> = validate_kb(&kb).iter().map(ToString::to_string).collect();
    if let Some(op) = ontology {
        let onto = parse_ontology(op)
            .with_context(|| format!("ontology {}", op.display()))
            .or_exit(RESOURCE)?;
        for id in kb.hpo_ids() {
            if !onto.contains(&id) {
                lines.push(format!("not in ontology: {id}"));
            }
        }
    }
    for l in &lines {
        println!("{l}");
    }
    println!("{} violations", lines.len());
    if lines.is_empty() {
        Ok(())
    } else {
        fail(INVALID, format!("{} failed validation", path.display()))
    }
}

fn cmd_embed_train(a: TrainArgs) -> CmdResult {
    let d = TrainConfig::default();
    let config = TrainConfig {
        dim: a.dim.unwrap_or(d.dim),
        epochs: a.epochs.unwrap_or(d.epochs),
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        seed: a.seed.unwrap_or(d.seed),
        negative_ratio: a.negative_ratio.unwrap_or(d.negative_ratio),
    };
    let table = load_synonym_table(&a.synonyms)
        .with_context(|| format!("synonyms {}", a.synonyms.display()))
        .map_err(|e| Failure {
            code: match e.downcast_ref::<KbError>() {
                Some(KbError::Io(_)) => RESOURCE,
                _ => INVALID,
            },
            error: e,
        })?;
    // divergence, bad hyperparameters and degenerate tables alike
    let trained = train_lexicon(&table, &config).or_exit(INVALID)?;
    for (epoch, loss) in trained.log.losses.iter().enumerate() {
        eprintln!("epoch {epoch} loss {loss:.6}");
    }
    save_lexicon(&trained.lexicon, &a.output)
        .with_context(|| format!("cannot write {}", a.output.display()))
        .or_exit(RESOURCE)?;
    eprintln!(
        "wrote {} tokens of dim {} to {}",
        trained.lexicon.len(),
        trained.lexicon.dim(),
        a.output.display()
    );
    Ok(())
}

fn cmd_embed_nearest(lexicon: &Path, kb: &Path, top: usize, phrase: &str) -> CmdResult {
    let lex = load_lexicon(lexicon)
        .with_context(|| format!("lexicon {}", lexicon.display()))
        .or_exit(RESOURCE)?;
    let table = load_synonym_table(kb)
        .with_context(|| format!("entities {}", kb.display()))
        .or_exit(RESOURCE)?;
    let entities: Vec<NumericEntity> = table.entries.iter().map(|(e, _)| e.clone()).collect();
    let refs = reference_embeddings_for(&lex, &entities);
    for (rank, (id, score)) in nearest_entities(&lex, &refs, phrase, top).into_iter().enumerate() {
        let name = entities.iter().find(|e| e.id == id).map_or("", |e| e.name.as_str());
        println!("{}\t{id}\t{name}\t{score:.4}", rank + 1);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conllu_detection() {
        assert!(looks_like_conllu("# text = a\n1\ta\ta\tDET\t_\t_\t0\troot\t_\t_\n"));
        assert!(!looks_like_conllu("temperature was 102F\n"));
    }

    #[test]
    fn raw_text_ids() {
        let docs = raw_documents("first line\n\nn7\tsecond line\n");
        assert_eq!(docs[0], ("doc1".into(), "first line".into()));
        assert_eq!(docs[1], ("n7".into(), "second line".into()));
    }
}
