//! Resolved run configuration, recorded in every artifact.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use readmit_core::classifier::LogRegOptions;
use readmit_core::corpus::{CorpusConfig, CutoffPolicy, NoteType, Stopwords};
use readmit_core::pipeline::{Method, PipelineConfig};
use readmit_core::topicmodel::LdaParams;
use readmit_core::vectorspace::TfidfOptions;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum StopwordSource {
    Bundled,
    None,
    File(PathBuf),
}

/// Everything that influences a run's outputs. Output locations and the
/// worker count are deliberately absent: they do not change results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub k_folds: usize,
    pub seed: u64,
    pub stratified: bool,
    pub lda: LdaParams,
    pub logreg: LogRegOptions,
    pub tfidf: TfidfOptions,
    pub stopwords: StopwordSource,
    pub date_cutoff: Option<NaiveDate>,
    pub discharge_cutoff: bool,
    pub cutoff_note_types: Vec<NoteType>,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut lda = LdaParams::default();
        lda.alpha = Some(lda.resolved_alpha());
        RunConfig {
            subcommand: String::new(),
            data: None,
            model: None,
            methods: Method::ALL.to_vec(),
            k_folds: 5,
            seed: 0,
            stratified: true,
            lda,
            logreg: LogRegOptions::default(),
            tfidf: TfidfOptions::default(),
            stopwords: StopwordSource::Bundled,
            date_cutoff: None,
            discharge_cutoff: true,
            cutoff_note_types: NoteType::ALL.to_vec(),
            top_k: 10,
        }
    }
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            lda: self.lda.clone(),
            logreg: self.logreg.clone(),
            tfidf: self.tfidf.clone(),
        }
    }

    pub fn corpus(&self) -> Result<CorpusConfig> {
        let stopwords = match &self.stopwords {
            StopwordSource::Bundled => Stopwords::english(),
            StopwordSource::None => Stopwords::none(),
            StopwordSource::File(p) => Stopwords::from_file(p)?,
        };
        Ok(CorpusConfig {
            stopwords,
            cutoff: CutoffPolicy {
                date: self.date_cutoff,
                use_discharge_date: self.discharge_cutoff,
                note_types: self.cutoff_note_types.clone(),
            },
        })
    }

    /// Read a config from a file holding either a bare config or an artifact
    /// with a top-level `config` field.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("{}: not valid JSON", path.display()))?;
        let inner = value.get("config").cloned().unwrap_or(value);
        serde_json::from_value(inner)
            .with_context(|| format!("{}: not a run configuration", path.display()))
    }
}
