//! The `readmit` command line.

mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use readmit_core::corpus::{load_corpus, Corpus, NoteType};
use readmit_core::eval::{self, cross_validate, EvalConfig};
use readmit_core::explain::explain_ensemble;
use readmit_core::pipeline::{self, Method, ModelFile};
use readmit_core::synth::{self, SynthConfig};
use serde_json::json;

pub use config::{RunConfig, StopwordSource, FORMAT_VERSION};

pub const STRUCTURED_FILE: &str = "structured.csv";
pub const NOTES_FILE: &str = "notes.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "readmit",
    version,
    about = "Readmission prediction from structured data and clinical notes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// Generator configuration (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_patients: Option<usize>,
    },
    /// Summarize patients and notes per modality.
    Describe {
        #[arg(long)]
        data: PathBuf,
        /// Also write describe.txt and describe.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one method on every patient and save the model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Cross-validate methods and report c-statistics.
    Evaluate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Disable stratified folds.
        #[arg(long)]
        no_stratify: bool,
        /// Fold worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Start from a recorded configuration (a report or config JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Score patients with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature importance of a saved averaged-sigmoid model.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
        /// Write per-modality bar-chart data files.
        #[arg(long)]
        bar_data: bool,
    },
}

#[derive(Debug, Args, Default)]
struct CorpusArgs {
    /// Stopword file, one word per line.
    #[arg(long, conflicts_with = "no_stopwords")]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    no_stopwords: bool,
    /// Drop notes dated after this day for patients without a discharge date.
    #[arg(long)]
    date_cutoff: Option<NaiveDate>,
    /// Ignore the discharge_date column.
    #[arg(long)]
    no_discharge_cutoff: bool,
    /// Note types the cutoff applies to.
    #[arg(long, value_delimiter = ',', value_parser = parse_note_type)]
    cutoff_note_types: Option<Vec<NoteType>>,
}

#[derive(Debug, Args, Default)]
struct ModelArgs {
    #[arg(long)]
    lda_topics: Option<usize>,
    /// Defaults to 5 / topics.
    #[arg(long)]
    lda_alpha: Option<f64>,
    #[arg(long)]
    lda_beta: Option<f64>,
    #[arg(long)]
    lda_iterations: Option<usize>,
    #[arg(long)]
    lda_infer_iterations: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    max_df: Option<f64>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: readmit_core::Error| e.to_string())
}

fn parse_note_type(s: &str) -> std::result::Result<NoteType, String> {
    NoteType::parse(s).ok_or_else(|| format!("unknown note type `{s}`"))
}

impl CorpusArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = &self.stopwords {
            cfg.stopwords = StopwordSource::File(p.clone());
        }
        if self.no_stopwords {
            cfg.stopwords = StopwordSource::None;
        }
        if self.date_cutoff.is_some() {
            cfg.date_cutoff = self.date_cutoff;
        }
        if self.no_discharge_cutoff {
            cfg.discharge_cutoff = false;
        }
        if let Some(t) = &self.cutoff_note_types {
            cfg.cutoff_note_types = t.clone();
        }
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.lda_topics {
            cfg.lda.n_topics = k;
            cfg.lda.alpha = None;
        }
        if self.lda_alpha.is_some() {
            cfg.lda.alpha = self.lda_alpha;
        }
        cfg.lda.alpha = Some(cfg.lda.resolved_alpha());
        set(&mut cfg.lda.beta, self.lda_beta);
        set(&mut cfg.lda.iterations, self.lda_iterations);
        set(&mut cfg.lda.infer_iterations, self.lda_infer_iterations);
        set(&mut cfg.logreg.lambda, self.lambda);
        set(&mut cfg.logreg.tol, self.tol);
        set(&mut cfg.logreg.max_iter, self.max_iter);
        set(&mut cfg.tfidf.min_df, self.min_df);
        set(&mut cfg.tfidf.max_df, self.max_df);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Run the command line and return the process exit code: 0 on success, 1
/// on data or validation errors, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            config,
            out,
            seed,
            n_patients,
        } => cmd_synth(config.as_deref(), &out, seed, n_patients),
        Command::Describe { data, out } => cmd_describe(&data, out.as_deref()),
        Command::Train {
            data,
            method,
            out,
            seed,
            corpus,
            model,
        } => {
            let mut cfg = RunConfig {
                subcommand: "train".into(),
                data: Some(data),
                methods: vec![method],
                ..RunConfig::default()
            };
            set(&mut cfg.seed, seed);
            corpus.apply(&mut cfg);
            model.apply(&mut cfg);
            cmd_train(&cfg, &out)
        }
        Command::Evaluate {
            data,
            methods,
            k,
            seed,
            out,
            no_stratify,
            jobs,
            config,
            corpus,
            model,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::from_file(p)?,
                None => RunConfig::default(),
            };
            cfg.subcommand = "evaluate".into();
            cfg.model = None;
            if data.is_some() {
                cfg.data = data;
            }
            set(&mut cfg.methods, methods);
            set(&mut cfg.k_folds, k);
            set(&mut cfg.seed, seed);
            if no_stratify {
                cfg.stratified = false;
            }
            corpus.apply(&mut cfg);
            model.apply(&mut cfg);
            cmd_evaluate(&cfg, &out, jobs)
        }
        Command::Predict { model, data, out } => cmd_predict(&model, &data, &out),
        Command::Explain {
            model,
            data,
            top_k,
            out,
            bar_data,
        } => cmd_explain(&model, &data, top_k, &out, bar_data),
    }
}

/// Write through a temporary file in the destination directory, then rename.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    use std::io::Write as _;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn data_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(STRUCTURED_FILE), dir.join(NOTES_FILE))
}

fn load(cfg: &RunConfig, dir: &Path) -> Result<Corpus> {
    let (s, n) = data_paths(dir);
    let corpus = load_corpus(&s, &n, &cfg.corpus()?)?;
    if corpus.dropped_note_only > 0 {
        eprintln!(
            "warning: {} patient(s) with notes but no structured row were dropped",
            corpus.dropped_note_only
        );
    }
    Ok(corpus)
}

fn read_synth_config(path: &Path) -> Result<SynthConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .with_context(|| format!("{}: invalid synth config", path.display()))?
    } else {
        toml::from_str(&text)
            .with_context(|| format!("{}: invalid synth config", path.display()))?
    };
    Ok(cfg)
}

fn cmd_synth(
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    n_patients: Option<usize>,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => read_synth_config(p)?,
        None => SynthConfig::default(),
    };
    set(&mut cfg.seed, seed);
    set(&mut cfg.n_patients, n_patients);
    let output = synth::generate(&cfg)?;
    let (s, n) = data_paths(out);
    write_atomic(&s, output.structured_csv.as_bytes())?;
    write_atomic(&n, output.notes_jsonl.as_bytes())?;
    write_atomic(
        &out.join("synth_config.json"),
        &to_json(&json!({ "format_version": FORMAT_VERSION, "config": cfg }))?,
    )?;
    println!("wrote {} patients to {}", cfg.n_patients, out.display());
    Ok(())
}

fn cmd_describe(data: &Path, out: Option<&Path>) -> Result<()> {
    let (s, n) = data_paths(data);
    let summary = synth::describe(&s, &n)?;
    let table = summary.to_table();
    print!("{table}");
    if let Some(out) = out {
        write_atomic(&out.join("describe.txt"), table.as_bytes())?;
        write_atomic(
            &out.join("describe.json"),
            &to_json(&json!({
                "format_version": FORMAT_VERSION,
                "data": data,
                "rows": summary.rows,
            }))?,
        )?;
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = cfg.data.as_deref().context("--data is required")?;
    let corpus = load(cfg, data)?;
    let method = cfg.methods[0];
    let (pipe, ensemble) = pipeline::train(&corpus, method, &cfg.pipeline(), cfg.seed)?;
    let model = ModelFile::new(method, serde_json::to_value(cfg)?, pipe, ensemble);
    write_atomic(out, model.to_json()?.as_bytes())?;
    println!(
        "trained {method} on {} patients -> {}",
        corpus.patients.len(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<()> {
    let data = cfg
        .data
        .as_deref()
        .context("--data is required (or a --config recording it)")?;
    if cfg.methods.is_empty() {
        bail!("no methods given");
    }
    let corpus = load(cfg, data)?;
    let eval_cfg = EvalConfig {
        k: cfg.k_folds,
        seed: cfg.seed,
        stratified: cfg.stratified,
        jobs,
        pipeline: cfg.pipeline(),
    };
    let result = cross_validate(&corpus, &cfg.methods, &eval_cfg)?;
    let table = eval::format_table(&result.methods);
    let report = json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "columns": ["Method", "Avg. c-stats", "95% CI", "Delta"],
        "methods": result.methods,
        "folds": result.folds,
        "plan": result.plan,
    });
    write_atomic(&out.join("report.json"), &to_json(&report)?)?;
    write_atomic(&out.join("report.txt"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelFile, RunConfig)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let model = ModelFile::from_json(&text).with_context(|| path.display().to_string())?;
    let cfg: RunConfig = serde_json::from_value(model.config.clone())
        .with_context(|| format!("{}: embedded config", path.display()))?;
    Ok((model, cfg))
}

fn cmd_predict(model_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let (model, cfg) = load_model(model_path)?;
    let corpus = load(&cfg, data)?;
    let scores = model.score(&corpus)?;
    let mut csv = String::from("patient_id,probability\n");
    for (p, s) in corpus.patients.iter().zip(&scores) {
        let _ = writeln!(csv, "{},{}", p.patient_id, s);
    }
    write_atomic(out, csv.as_bytes())?;
    println!("scored {} patients -> {}", scores.len(), out.display());
    Ok(())
}

fn bar_file_name(modality: &str) -> String {
    format!("{}.csv", modality.replace(':', "_"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_explain(
    model_path: &Path,
    data: &Path,
    top_k: usize,
    out: &Path,
    bar_data: bool,
) -> Result<()> {
    let (model, cfg) = load_model(model_path)?;
    let corpus = load(&cfg, data)?;
    let rows: Vec<usize> = (0..corpus.patients.len()).collect();
    let datasets = model.pipeline.transform(&corpus, &rows)?;
    let explanations = explain_ensemble(&model.ensemble, &datasets, &corpus.labels(), top_k)?;

    let mut text = String::new();
    let mut modalities = serde_json::Map::new();
    // Report in the fixed modality order.
    for name in &model.modality_order {
        let Some(result) = explanations.get(name) else {
            continue;
        };
        let _ = writeln!(text, "== {name}");
        match result {
            Ok(ex) => {
                let table_rows: Vec<[String; 3]> = ex
                    .top
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        [
                            format!("{}", i + 1),
                            t.name.clone(),
                            format!("{:.4}", t.score),
                        ]
                    })
                    .collect();
                text.push_str(&eval::render_table(
                    &["Rank", "Feature", "Score"],
                    &table_rows,
                ));
                modalities.insert(name.clone(), serde_json::to_value(ex)?);
                if bar_data {
                    let mut csv = String::from("feature,score\n");
                    for t in &ex.top {
                        let _ = writeln!(csv, "{},{}", csv_field(&t.name), t.score);
                    }
                    write_atomic(&out.join("bars").join(bar_file_name(name)), csv.as_bytes())?;
                }
            }
            Err(e) => {
                let _ = writeln!(text, "error: {e}");
                eprintln!("warning: {e}");
                modalities.insert(name.clone(), json!({ "error": e.to_string() }));
            }
        }
        text.push('\n');
    }
    let report = json!({
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "top_k": top_k,
        "modalities": modalities,
    });
    write_atomic(&out.join("explain.json"), &to_json(&report)?)?;
    write_atomic(&out.join("explain.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
