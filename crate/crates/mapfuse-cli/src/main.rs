//! `mapfuse` — train, apply, and evaluate weighted fusions of retrieval
//! runs.
//!
//! Exit codes: 0 success, 1 runtime or optimization failure, 2 usage
//! error. Usage errors are raised before any output file is touched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mapfuse::eval::{evaluate, two_fold_cv, wilcoxon_signed_rank, CvReport};
use mapfuse::ingest::{
    assemble_dataset, assemble_panels, parse_qrels, parse_run, serialize_qrels, serialize_run,
    RunRecord, Warning,
};
use mapfuse::model::{ensemble_scores, ranking, Weights};
use mapfuse::optim::{
    multistart_batch, multistart_online, multistart_unsup, BatchConfig, FitResult, LearningRate,
    OnlineConfig, StartPolicy, UnsupConfig,
};
use mapfuse::synth::{synth_generate, SynthParams};
use mapfuse::text::{parse_stopwords, preprocess, tfidf_rank};
use mapfuse::Dataset;

/// Tag stamped on fused output runs.
const FUSED_TAG: &str = "gEnM";
const FORMAT_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "mapfuse", version, about = "Learn and apply score-weighted rank fusion")]
struct Cli {
    /// Worker threads; 0 keeps the library default.
    #[arg(long, global = true, env = "MAPFUSE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn fusion weights from runs and qrels.
    Train(TrainArgs),
    /// Fuse runs under stored weights into a single output run.
    Apply(ApplyArgs),
    /// Score a run against qrels.
    Eval(EvalArgs),
    /// Score a corpus with the built-in tf-idf ranker.
    Tfidf(TfidfArgs),
    /// Generate a synthetic dataset with planted optimal weights.
    Synth(SynthArgs),
    /// Compare two runs query-by-query with a signed-rank test.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Batch,
    Online,
    Unsup,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Batch => "batch",
            Mode::Online => "online",
            Mode::Unsup => "unsup",
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// One run file per ranker.
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Relevance judgments; required for batch/online, forbidden for unsup.
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long, default_value_t = 200.0)]
    beta: f64,
    /// Convergence threshold; defaults to 0 for batch and 1e-4 otherwise.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Iteration cap per start (batch) or epoch cap (online/unsup).
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Start policy: `binary` or `random:N`.
    #[arg(long, default_value = "binary")]
    starts: String,
    /// Co-training penalty coefficient.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Pseudo-relevance score threshold (unsup only).
    #[arg(long)]
    score_threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 = train on everything; 2 = also report two-fold cross validation.
    #[arg(long, default_value_t = 0)]
    folds: usize,
    /// Reshuffle the online query order each epoch with this seed.
    #[arg(long)]
    shuffle_seed: Option<u64>,
    /// Disable the derivative accumulator window.
    #[arg(long)]
    no_cutoff: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long, num_args = 1.., required = true)]
    runs: Vec<PathBuf>,
    /// Weights file written by `train`.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Comma-separated subset of: map, p@1, p@5, pr11.
    #[arg(long, default_value = "map,p@1,p@5,pr11")]
    metrics: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write the averaged 11-point curve as `recall,precision` rows.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
}

#[derive(Args)]
struct TfidfArgs {
    /// Tab-separated `doc_id<TAB>text`, one document per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Tab-separated `query_id<TAB>text`, one query per line.
    #[arg(long)]
    queries: PathBuf,
    /// One stopword per line.
    #[arg(long)]
    stopwords: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    rankers: usize,
    #[arg(long, default_value_t = 50)]
    queries: usize,
    #[arg(long, default_value_t = 100)]
    docs: usize,
    #[arg(long, default_value_t = 5)]
    relevant: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    run_a: PathBuf,
    #[arg(long)]
    run_b: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Usage violations that clap's type layer cannot express.
struct UsageError(String);

#[derive(Serialize)]
struct Manifest {
    command: String,
    artifact_version: String,
    /// RFC 3339; omitted where outputs must be byte-reproducible.
    started_at: Option<String>,
    finished_at: Option<String>,
    config: serde_json::Value,
}

impl Manifest {
    fn start(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: Some(chrono::Utc::now().to_rfc3339()),
            finished_at: None,
            config,
        }
    }

    /// Timestamp-free variant for outputs compared byte-for-byte.
    fn reproducible(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: None,
            finished_at: None,
            config,
        }
    }

    fn finish(&mut self) {
        if self.started_at.is_some() {
            self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = mapfuse::parallel::configure_threads(cli.threads) {
        eprintln!("error: cannot configure {} threads: {e}", cli.threads);
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Apply(args) => cmd_apply(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Tfidf(args) => cmd_tfidf(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast::<UsageError>() {
            Ok(usage) => {
                eprintln!("usage error: {}", usage.0);
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}

impl std::fmt::Debug for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<Vec<RunRecord>>> {
    paths
        .iter()
        .map(|p| {
            parse_run(&read_to_string(p)?).with_context(|| format!("parsing run {}", p.display()))
        })
        .collect()
}

fn print_warnings(warnings: &[Warning]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn parse_starts(spec: &str, seed: u64) -> Result<StartPolicy> {
    if spec == "binary" {
        return Ok(StartPolicy::AllBinary);
    }
    if let Some(count) = spec.strip_prefix("random:") {
        let count: usize = count
            .parse()
            .map_err(|_| usage(format!("invalid start count in --starts {spec}")))?;
        return Ok(StartPolicy::Random { count, seed });
    }
    Err(usage(format!(
        "--starts must be `binary` or `random:N`, got {spec}"
    )))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

// ---------------------------------------------------------------------
// train

type Trainer = Box<dyn Fn(&Dataset) -> mapfuse::Result<FitResult>>;

fn train_config_echo(args: &TrainArgs, epsilon: f64) -> serde_json::Value {
    json!({
        "mode": args.mode.name(),
        "runs": args.runs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "qrels": args.qrels.as_ref().map(|p| p.display().to_string()),
        "beta": args.beta,
        "epsilon": epsilon,
        "max_iters": args.max_iters,
        "starts": args.starts,
        "sigma": args.sigma,
        "score_threshold": args.score_threshold,
        "seed": args.seed,
        "folds": args.folds,
        "shuffle_seed": args.shuffle_seed,
        "cutoff_enabled": !args.no_cutoff,
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    match args.mode {
        Mode::Unsup => {
            if args.qrels.is_some() {
                return Err(usage("--qrels cannot be combined with --mode unsup"));
            }
            if args.score_threshold.is_none() {
                return Err(usage("--mode unsup requires --score-threshold"));
            }
            if args.folds != 0 {
                return Err(usage("--folds requires relevance judgments; not available with --mode unsup"));
            }
        }
        Mode::Batch | Mode::Online => {
            if args.qrels.is_none() {
                return Err(usage(format!("--mode {} requires --qrels", args.mode.name())));
            }
        }
    }
    if args.folds != 0 && args.folds != 2 {
        return Err(usage("--folds must be 0 or 2"));
    }
    if args.beta <= 0.0 {
        return Err(usage("--beta must be positive"));
    }
    let epsilon = args.epsilon.unwrap_or(match args.mode {
        Mode::Batch => 0.0,
        Mode::Online | Mode::Unsup => 1e-4,
    });
    let starts = parse_starts(&args.starts, args.seed)?;
    let mut manifest = Manifest::start("train", train_config_echo(&args, epsilon));

    let runs = load_runs(&args.runs)?;
    let (fit, tags, cv): (FitResult, Vec<String>, Option<CvReport>) = match args.mode {
        Mode::Batch | Mode::Online => {
            let qrels = parse_qrels(&read_to_string(args.qrels.as_ref().unwrap())?)?;
            let (dataset, warnings) = assemble_dataset(&runs, &qrels)?;
            print_warnings(&warnings);
            let trainer: Trainer = match args.mode {
                Mode::Batch => {
                    let cfg = BatchConfig {
                        beta: args.beta,
                        epsilon,
                        max_iters: args.max_iters,
                        starts: starts.clone(),
                        cutoff_enabled: !args.no_cutoff,
                        literal_increments: false,
                    };
                    Box::new(move |ds: &Dataset| multistart_batch(ds, &cfg))
                }
                Mode::Online => {
                    let cfg = OnlineConfig {
                        beta: args.beta,
                        epsilon,
                        max_epochs: args.max_iters,
                        starts: starts.clone(),
                        shuffle_seed: args.shuffle_seed,
                        learning_rate: LearningRate::InverseTime,
                    };
                    Box::new(move |ds: &Dataset| multistart_online(ds, &cfg))
                }
                Mode::Unsup => unreachable!(),
            };
            let fit = trainer(&dataset)?;
            let cv = if args.folds == 2 {
                Some(two_fold_cv(
                    &dataset,
                    |fold| Ok(trainer(fold)?.best_weights),
                    args.seed,
                )?)
            } else {
                None
            };
            (fit, dataset.ranker_tags().to_vec(), cv)
        }
        Mode::Unsup => {
            let panels = assemble_panels(&runs)?;
            let cfg = UnsupConfig {
                beta: args.beta,
                epsilon,
                score_threshold: args.score_threshold.unwrap(),
                sigma: args.sigma,
                max_epochs: args.max_iters,
                starts,
            };
            let fit = multistart_unsup(&panels, &cfg)?;
            let tags = panels.ranker_tags().to_vec();
            (fit, tags, None)
        }
    };

    if fit.degenerate {
        eprintln!("warning: every selected weight clamped to zero; the fusion is degenerate");
    }
    let weights_by_tag: BTreeMap<&str, f64> = tags
        .iter()
        .map(String::as_str)
        .zip(fit.best_weights.0.iter().copied())
        .collect();
    manifest.finish();
    let report = json!({
        "format_version": FORMAT_VERSION,
        "manifest": manifest,
        "beta": args.beta,
        "ranker_tags": tags,
        "weights": weights_by_tag,
        "raw_weights": fit.raw_weights,
        "degenerate": fit.degenerate,
        "final_objective": fit.final_objective,
        "final_map": fit.final_map,
        "chosen_start_index": fit.chosen_start_index,
        "per_start": fit.per_start,
        "cv": cv,
    });
    write_json(&args.out, &report)?;
    match fit.final_map {
        Some(map) => println!("trained: objective {:.6}, exact MAP {:.6}", fit.final_objective, map),
        None => println!("trained: objective {:.6}", fit.final_objective),
    }
    Ok(())
}

// ---------------------------------------------------------------------
// apply

fn cmd_apply(args: ApplyArgs) -> Result<()> {
    let manifest = {
        let mut m = Manifest::start(
            "apply",
            json!({
                "runs": args.runs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "weights": args.weights.display().to_string(),
                "out": args.out.display().to_string(),
            }),
        );
        m.finish();
        m
    };
    let runs = load_runs(&args.runs)?;
    let panels = assemble_panels(&runs)?;
    let stored: serde_json::Value = serde_json::from_str(&read_to_string(&args.weights)?)
        .with_context(|| format!("parsing weights file {}", args.weights.display()))?;
    let by_tag = stored
        .get("weights")
        .and_then(|w| w.as_object())
        .ok_or_else(|| anyhow!("weights file has no `weights` object"))?;
    let mut missing = Vec::new();
    let mut weights = Vec::with_capacity(panels.n_rankers());
    for tag in panels.ranker_tags() {
        match by_tag.get(tag).and_then(|v| v.as_f64()) {
            Some(w) => weights.push(w),
            None => missing.push(tag.clone()),
        }
    }
    if !missing.is_empty() {
        bail!("weights file lacks entries for run tags: {}", missing.join(", "));
    }
    let weights = Weights(weights);

    let mut fused = Vec::new();
    for panel in panels.panels() {
        let scores = ensemble_scores(panel, &weights)?;
        for (pos, doc) in ranking(panel, &weights)?.into_iter().enumerate() {
            fused.push(RunRecord {
                query_id: panel.query_id().to_string(),
                doc_id: panel.doc_ids()[doc].clone(),
                rank: pos as i64 + 1,
                score: scores[doc],
                tag: FUSED_TAG.to_string(),
            });
        }
    }
    fs::write(&args.out, serialize_run(&fused))
        .with_context(|| format!("writing {}", args.out.display()))?;
    write_json(
        &manifest_sibling(&args.out),
        &serde_json::to_value(&manifest)?,
    )?;
    println!("fused {} queries into {}", panels.len(), args.out.display());
    Ok(())
}

fn manifest_sibling(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

// ---------------------------------------------------------------------
// eval

#[derive(Default)]
struct MetricSelection {
    map: bool,
    precision_at: Vec<usize>,
    pr11: bool,
}

fn parse_metrics(spec: &str) -> Result<MetricSelection> {
    let mut sel = MetricSelection::default();
    for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if token == "map" {
            sel.map = true;
        } else if token == "pr11" {
            sel.pr11 = true;
        } else if let Some(k) = token.strip_prefix("p@") {
            let k: usize = k
                .parse()
                .map_err(|_| usage(format!("invalid precision cutoff in metric {token}")))?;
            if k == 0 {
                return Err(usage("precision cutoff must be positive"));
            }
            sel.precision_at.push(k);
        } else {
            return Err(usage(format!(
                "unknown metric {token}; expected map, p@K, or pr11"
            )));
        }
    }
    if !sel.map && sel.precision_at.is_empty() && !sel.pr11 {
        return Err(usage("--metrics selected nothing"));
    }
    sel.precision_at.sort_unstable();
    sel.precision_at.dedup();
    Ok(sel)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let selection = parse_metrics(&args.metrics)?;
    let mut manifest = Manifest::start(
        "eval",
        json!({
            "run": args.run.display().to_string(),
            "qrels": args.qrels.display().to_string(),
            "metrics": args.metrics,
            "pr_csv": args.pr_csv.as_ref().map(|p| p.display().to_string()),
        }),
    );
    let run = parse_run(&read_to_string(&args.run)?)?;
    let qrels = parse_qrels(&read_to_string(&args.qrels)?)?;
    let (dataset, warnings) = assemble_dataset(&[run], &qrels)?;
    print_warnings(&warnings);
    let report = evaluate(&dataset, &Weights(vec![1.0]), &selection.precision_at)?;

    let mut body = serde_json::Map::new();
    if selection.map {
        body.insert("map".into(), json!(report.map));
        body.insert("per_query_ap".into(), json!(report.per_query_ap));
    }
    if !selection.precision_at.is_empty() {
        let pr_at: BTreeMap<String, f64> = report
            .pr_at
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        body.insert("pr_at".into(), json!(pr_at));
    }
    if selection.pr11 {
        body.insert("pr_curve".into(), json!(report.pr_curve));
    }
    body.insert("queries".into(), json!(dataset.len()));
    manifest.finish();
    body.insert("manifest".into(), serde_json::to_value(&manifest)?);
    body.insert("format_version".into(), json!(FORMAT_VERSION));
    write_json(&args.out, &serde_json::Value::Object(body))?;

    if let Some(csv_path) = &args.pr_csv {
        let mut csv = String::from("recall,precision\n");
        for (i, p) in report.pr_curve.iter().enumerate() {
            csv.push_str(&format!("{:.1},{}\n", i as f64 / 10.0, p));
        }
        fs::write(csv_path, csv).with_context(|| format!("writing {}", csv_path.display()))?;
    }
    if selection.map {
        println!("map {:.6} over {} queries", report.map, dataset.len());
    } else {
        println!("evaluated {} queries", dataset.len());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// tfidf

fn parse_tabbed(text: &str, what: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let Some((id, body)) = line.split_once('\t') else {
            bail!("{what} line {}: expected `id<TAB>text`", idx + 1);
        };
        out.push((id.trim().to_string(), body.to_string()));
    }
    Ok(out)
}

fn cmd_tfidf(args: TfidfArgs) -> Result<()> {
    let mut manifest = Manifest::start(
        "tfidf",
        json!({
            "corpus": args.corpus.display().to_string(),
            "queries": args.queries.display().to_string(),
            "stopwords": args.stopwords.display().to_string(),
        }),
    );
    let docs = parse_tabbed(&read_to_string(&args.corpus)?, "corpus")?;
    let queries = parse_tabbed(&read_to_string(&args.queries)?, "queries")?;
    let stopwords = parse_stopwords(&read_to_string(&args.stopwords)?);
    let corpus = preprocess(&docs, &queries, &stopwords)?;
    let (records, warnings) = tfidf_rank(&corpus);
    print_warnings(&warnings);
    fs::write(&args.out, serialize_run(&records))
        .with_context(|| format!("writing {}", args.out.display()))?;
    manifest.finish();
    write_json(&manifest_sibling(&args.out), &serde_json::to_value(&manifest)?)?;
    println!(
        "scored {} queries over {} documents ({} terms)",
        corpus.queries.len(),
        corpus.docs.len(),
        corpus.vocabulary.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// synth

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let params = SynthParams {
        rankers: args.rankers,
        queries: args.queries,
        docs: args.docs,
        relevant: args.relevant,
        noise: args.noise,
        seed: args.seed,
    };
    // Outputs are compared byte-for-byte across reruns, so the manifest
    // carries no timestamps.
    let manifest = Manifest::reproducible(
        "synth",
        json!({
            "rankers": args.rankers,
            "queries": args.queries,
            "docs": args.docs,
            "relevant": args.relevant,
            "noise": args.noise,
            "seed": args.seed,
        }),
    );
    let (dataset, planted) = synth_generate(&params)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    for (k, tag) in dataset.ranker_tags().iter().enumerate() {
        let mut records = Vec::new();
        for panel in dataset.panels() {
            let mut by_score: Vec<usize> = (0..panel.n_docs()).collect();
            by_score.sort_by(|&a, &b| {
                panel
                    .score(b, k)
                    .partial_cmp(&panel.score(a, k))
                    .unwrap()
                    .then_with(|| panel.doc_ids()[a].cmp(&panel.doc_ids()[b]))
            });
            records.extend(by_score.into_iter().enumerate().map(|(pos, d)| RunRecord {
                query_id: panel.query_id().to_string(),
                doc_id: panel.doc_ids()[d].clone(),
                rank: pos as i64 + 1,
                score: panel.score(d, k),
                tag: tag.clone(),
            }));
        }
        fs::write(args.out.join(format!("run_{tag}.txt")), serialize_run(&records))?;
    }

    let qrels: Vec<mapfuse::ingest::QrelRecord> = dataset
        .relevance()
        .iter()
        .flat_map(|rel| {
            rel.relevant_docs.iter().map(|doc| mapfuse::ingest::QrelRecord {
                query_id: rel.query_id.clone(),
                doc_id: doc.clone(),
                relevance: 1,
            })
        })
        .collect();
    fs::write(args.out.join("qrels.txt"), serialize_qrels(&qrels))?;

    let planted_map = mapfuse::model::mean_average_precision(&dataset, &planted)?;
    let planted_by_tag: BTreeMap<&str, f64> = dataset
        .ranker_tags()
        .iter()
        .map(String::as_str)
        .zip(planted.0.iter().copied())
        .collect();
    write_json(
        &args.out.join("planted.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "weights": planted_by_tag,
            "map_exact": planted_map,
        }),
    )?;
    write_json(&args.out.join("manifest.json"), &serde_json::to_value(&manifest)?)?;
    println!(
        "wrote {} rankers x {} queries x {} docs to {}",
        args.rankers,
        args.queries,
        args.docs,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// compare

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut manifest = Manifest::start(
        "compare",
        json!({
            "run_a": args.run_a.display().to_string(),
            "run_b": args.run_b.display().to_string(),
            "qrels": args.qrels.display().to_string(),
        }),
    );
    let qrels = parse_qrels(&read_to_string(&args.qrels)?)?;
    let run_a = parse_run(&read_to_string(&args.run_a)?)?;
    let run_b = parse_run(&read_to_string(&args.run_b)?)?;
    let (ds_a, warn_a) = assemble_dataset(&[run_a], &qrels)?;
    let (ds_b, warn_b) = assemble_dataset(&[run_b], &qrels)?;
    print_warnings(&warn_a);
    print_warnings(&warn_b);
    let report_a = evaluate(&ds_a, &Weights(vec![1.0]), &[])?;
    let report_b = evaluate(&ds_b, &Weights(vec![1.0]), &[])?;

    // Pair by query over the intersection, in sorted id order.
    let mut paired = Vec::new();
    for (qid, ap_a) in &report_a.per_query_ap {
        if let Some(ap_b) = report_b.per_query_ap.get(qid) {
            paired.push((qid.clone(), *ap_a, *ap_b));
        }
    }
    if paired.is_empty() {
        bail!("runs share no judged queries");
    }
    let a: Vec<f64> = paired.iter().map(|(_, x, _)| *x).collect();
    let b: Vec<f64> = paired.iter().map(|(_, _, y)| *y).collect();
    let wilcoxon = wilcoxon_signed_rank(&a, &b)?;
    if wilcoxon.insufficient_data {
        eprintln!(
            "warning: only {} nonzero differences; significance not assessable",
            wilcoxon.n_effective
        );
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    manifest.finish();
    let per_query: Vec<serde_json::Value> = paired
        .iter()
        .map(|(qid, x, y)| json!({"query": qid, "ap_a": x, "ap_b": y}))
        .collect();
    write_json(
        &args.out,
        &json!({
            "format_version": FORMAT_VERSION,
            "manifest": manifest,
            "map_a": mean(&a),
            "map_b": mean(&b),
            "paired_queries": paired.len(),
            "per_query": per_query,
            "wilcoxon": wilcoxon,
        }),
    )?;
    println!(
        "map_a {:.6} vs map_b {:.6}; p = {:.6}{}",
        mean(&a),
        mean(&b),
        wilcoxon.p_value,
        if wilcoxon.significant_95 { " (significant at 95%)" } else { "" }
    );
    Ok(())
}
