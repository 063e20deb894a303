//! Fitting every vectorizer on a training subset and materializing the
//! seven modality datasets for any set of patients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::LogRegOptions;
use crate::corpus::{Corpus, NoteType, PatientRecord};
use crate::ensemble::{fit_avgsig, fit_concat, EnsembleModel, ModalityDataset, ModalityKind};
use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;
use crate::rng::{self, derive_seed};
use crate::structured::{infer_schema, ColumnSchema, StructuredEncoder};
use crate::topicmodel::{fit_lda, LdaModel, LdaParams, TopicDistribution};
use crate::vectorspace::{fit_tfidf, TfidfModel, TfidfOptions};

pub const STRUCTURED: &str = "structured";

pub fn tfidf_name(t: NoteType) -> String {
    format!("tfidf:{t}")
}

pub fn lda_name(t: NoteType) -> String {
    format!("lda:{t}")
}

/// All seven modality names in their fixed order.
pub fn modality_order() -> Vec<String> {
    std::iter::once(STRUCTURED.to_string())
        .chain(NoteType::ALL.into_iter().map(tfidf_name))
        .chain(NoteType::ALL.into_iter().map(lda_name))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    StructuredOnly,
    TfidfLdaConcat,
    TfidfLdaAvgsig,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::StructuredOnly,
        Method::TfidfLdaConcat,
        Method::TfidfLdaAvgsig,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::StructuredOnly => "structured_only",
            Method::TfidfLdaConcat => "tfidf_lda_concat",
            Method::TfidfLdaAvgsig => "tfidf_lda_avgsig",
        }
    }

    pub fn uses_notes(self) -> bool {
        self != Method::StructuredOnly
    }

    /// Fit this method on aligned modality datasets (in [`modality_order`]).
    pub fn fit(
        self,
        datasets: &[ModalityDataset],
        y: &[bool],
        options: &LogRegOptions,
    ) -> Result<EnsembleModel> {
        match self {
            Method::StructuredOnly => {
                let s: Vec<ModalityDataset> = datasets
                    .iter()
                    .filter(|d| d.name == STRUCTURED)
                    .cloned()
                    .collect();
                fit_avgsig(&s, y, options)
            }
            Method::TfidfLdaConcat => fit_concat(datasets, y, options),
            Method::TfidfLdaAvgsig => fit_avgsig(datasets, y, options),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown method `{s}` (expected one of structured_only, tfidf_lda_concat, tfidf_lda_avgsig)")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub lda: LdaParams,
    pub logreg: LogRegOptions,
    pub tfidf: TfidfOptions,
}

/// Which patients a vectorizer was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub component: String,
    pub n_patients: usize,
    /// SHA-256 over the sorted patient ids, each followed by a newline.
    pub digest: String,
    #[serde(skip)]
    pub patient_ids: Vec<String>,
}

impl FitRecord {
    fn new(component: String, mut ids: Vec<String>) -> Self {
        ids.sort();
        let mut h = Sha256::new();
        for id in &ids {
            h.update(id.as_bytes());
            h.update(b"\n");
        }
        FitRecord {
            component,
            n_patients: ids.len(),
            digest: hex::encode(h.finalize()),
            patient_ids: ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteVectorizers {
    pub note_type: NoteType,
    pub tfidf: TfidfModel,
    pub lda: LdaModel,
}

/// Everything fitted on training patients that turns raw records into
/// modality feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub schema: Vec<ColumnSchema>,
    pub encoder: StructuredEncoder,
    pub notes: Vec<NoteVectorizers>,
    pub infer_iterations: usize,
}

pub struct FittedPipeline {
    pub pipeline: FeaturePipeline,
    /// Training-patient datasets; LDA rows come from the training chain.
    pub train: Vec<ModalityDataset>,
    pub fit_records: Vec<FitRecord>,
}

impl FeaturePipeline {
    /// Fit on `corpus.patients[train]`. `stream` separates the LDA random
    /// streams of different fits sharing one seed (e.g. CV folds).
    pub fn fit(
        corpus: &Corpus,
        train: &[usize],
        config: &PipelineConfig,
        seed: u64,
        stream: u64,
        with_notes: bool,
    ) -> Result<FittedPipeline> {
        let patients: Vec<&PatientRecord> = train.iter().map(|&i| &corpus.patients[i]).collect();
        let rows: Vec<&[Option<String>]> =
            patients.iter().map(|p| p.structured.as_slice()).collect();
        let schema = infer_schema(&corpus.feature_columns, rows.iter().copied());
        let encoder = StructuredEncoder::fit(&schema, &rows)?;
        let mut fit_records = vec![FitRecord::new(
            STRUCTURED.to_string(),
            patients.iter().map(|p| p.patient_id.clone()).collect(),
        )];
        let mut train_sets = vec![structured_dataset(&encoder, &patients)?];

        let mut notes = Vec::new();
        if with_notes {
            let mut tfidf_sets = Vec::new();
            let mut lda_sets = Vec::new();
            for t in NoteType::ALL {
                let with_doc: Vec<(&PatientRecord, &Vec<String>)> = patients
                    .iter()
                    .filter_map(|p| p.documents.get(&t).map(|d| (*p, d)))
                    .collect();
                let docs: Vec<&Vec<String>> = with_doc.iter().map(|(_, d)| *d).collect();
                let ids: Vec<String> = with_doc.iter().map(|(p, _)| p.patient_id.clone()).collect();

                let tfidf =
                    fit_tfidf(&docs, &config.tfidf).map_err(|e| e.in_modality(&tfidf_name(t)))?;
                fit_records.push(FitRecord::new(tfidf_name(t), ids.clone()));

                let lda_seed = derive_seed(seed, &[rng::STREAM_LDA_FIT, stream, t.index() as u64]);
                let (lda, thetas) = fit_lda(&docs, &config.lda, lda_seed)
                    .map_err(|e| e.in_modality(&lda_name(t)))?;
                fit_records.push(FitRecord::new(lda_name(t), ids));

                let mut theta_iter = thetas.into_iter();
                let train_thetas: Vec<Option<TopicDistribution>> = patients
                    .iter()
                    .map(|p| {
                        p.documents
                            .contains_key(&t)
                            .then(|| theta_iter.next().expect("one theta per document"))
                    })
                    .collect();
                let vec = NoteVectorizers {
                    note_type: t,
                    tfidf,
                    lda,
                };
                tfidf_sets.push(tfidf_dataset(&vec, &patients));
                lda_sets.push(lda_dataset(&vec, &patients, |i, _| train_thetas[i].clone()));
                notes.push(vec);
            }
            train_sets.extend(tfidf_sets);
            train_sets.extend(lda_sets);
        }

        Ok(FittedPipeline {
            pipeline: FeaturePipeline {
                schema,
                encoder,
                notes,
                infer_iterations: config.lda.infer_iterations,
            },
            train: train_sets,
            fit_records,
        })
    }

    pub fn has_notes(&self) -> bool {
        !self.notes.is_empty()
    }

    /// Datasets for arbitrary patients; LDA vectors by fold-in inference.
    pub fn transform(&self, corpus: &Corpus, rows: &[usize]) -> Result<Vec<ModalityDataset>> {
        let patients: Vec<&PatientRecord> = rows.iter().map(|&i| &corpus.patients[i]).collect();
        self.transform_patients(&patients)
    }

    pub fn transform_patients(&self, patients: &[&PatientRecord]) -> Result<Vec<ModalityDataset>> {
        let mut sets = vec![structured_dataset(&self.encoder, patients)?];
        sets.extend(self.notes.iter().map(|v| tfidf_dataset(v, patients)));
        sets.extend(self.notes.iter().map(|v| {
            lda_dataset(v, patients, |_, p| {
                p.documents.get(&v.note_type).map(|doc| {
                    let seed = derive_seed(
                        v.lda.seed,
                        &[rng::STREAM_LDA_INFER, rng::fnv1a(p.patient_id.as_bytes())],
                    );
                    v.lda.infer(doc, self.infer_iterations, seed)
                })
            })
        }));
        Ok(sets)
    }

    /// Structural checks after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.encoder.means.len() != self.encoder.dim()
            || self.encoder.stds.len() != self.encoder.dim()
        {
            return Err(Error::Model(
                "structured encoder statistics have the wrong length".into(),
            ));
        }
        for v in &self.notes {
            if v.tfidf.idf.len() != v.tfidf.vocabulary.len() {
                return Err(Error::Model(format!(
                    "TF-IDF `{}`: idf length differs from vocabulary",
                    v.note_type
                )));
            }
            v.lda.validate()?;
        }
        Ok(())
    }
}

fn structured_dataset(
    encoder: &StructuredEncoder,
    patients: &[&PatientRecord],
) -> Result<ModalityDataset> {
    let mut m = SparseMatrix::new(encoder.dim());
    for p in patients {
        let row = encoder
            .encode(&p.structured)
            .map_err(|e| Error::Invalid(format!("patient `{}`: {e}", p.patient_id)))?;
        m.push_dense_row(&row);
    }
    Ok(ModalityDataset {
        name: STRUCTURED.to_string(),
        kind: ModalityKind::Structured,
        matrix: m,
        available: vec![true; patients.len()],
        feature_names: encoder.feature_names.clone(),
    })
}

fn tfidf_dataset(v: &NoteVectorizers, patients: &[&PatientRecord]) -> ModalityDataset {
    let mut m = SparseMatrix::new(v.tfidf.dim());
    let mut available = Vec::with_capacity(patients.len());
    for p in patients {
        match p.documents.get(&v.note_type) {
            Some(doc) => {
                m.push_sparse_row(&v.tfidf.transform(doc));
                available.push(true);
            }
            None => {
                m.push_sparse_row(&[]);
                available.push(false);
            }
        }
    }
    ModalityDataset {
        name: tfidf_name(v.note_type),
        kind: ModalityKind::Tfidf,
        matrix: m,
        available,
        feature_names: v.tfidf.vocabulary.tokens().to_vec(),
    }
}

fn lda_dataset<F>(v: &NoteVectorizers, patients: &[&PatientRecord], mut theta: F) -> ModalityDataset
where
    F: FnMut(usize, &PatientRecord) -> Option<TopicDistribution>,
{
    let k = v.lda.dim();
    let mut m = SparseMatrix::new(k);
    let mut available = Vec::with_capacity(patients.len());
    for (i, p) in patients.iter().enumerate() {
        match theta(i, p) {
            Some(t) => {
                m.push_dense_row(&t.0);
                available.push(true);
            }
            None => {
                m.push_sparse_row(&[]);
                available.push(false);
            }
        }
    }
    let feature_names = (0..k)
        .map(|t| {
            v.lda
                .top_words(t, 3)
                .map(|w| w.join("/"))
                .unwrap_or_default()
        })
        .collect();
    ModalityDataset {
        name: lda_name(v.note_type),
        kind: ModalityKind::Lda,
        matrix: m,
        available,
        feature_names,
    }
}

/// Fit the pipeline and one method on every patient of `corpus`.
pub fn train(
    corpus: &Corpus,
    method: Method,
    config: &PipelineConfig,
    seed: u64,
) -> Result<(FeaturePipeline, EnsembleModel)> {
    let all: Vec<usize> = (0..corpus.patients.len()).collect();
    let fitted = FeaturePipeline::fit(corpus, &all, config, seed, u64::MAX, method.uses_notes())?;
    let y = corpus.labels();
    let model = method.fit(&fitted.train, &y, &config.logreg)?;
    Ok((fitted.pipeline, model))
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Self-contained trained model: feature pipeline, fused classifier, and the
/// configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub method: Method,
    pub config: serde_json::Value,
    pub modality_order: Vec<String>,
    pub pipeline: FeaturePipeline,
    pub ensemble: EnsembleModel,
}

impl ModelFile {
    pub fn new(
        method: Method,
        config: serde_json::Value,
        pipeline: FeaturePipeline,
        ensemble: EnsembleModel,
    ) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            method,
            config,
            modality_order: modality_order(),
            pipeline,
            ensemble,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        match value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(MODEL_FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Model(format!("unsupported format_version {v}"))),
            None => return Err(Error::Model("missing format_version".into())),
        }
        let model: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Model(e.to_string()))?;
        model.pipeline.validate()?;
        Ok(model)
    }

    /// Scores for every patient in `corpus`.
    pub fn score(&self, corpus: &Corpus) -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..corpus.patients.len()).collect();
        let datasets = self.pipeline.transform(corpus, &rows)?;
        self.ensemble.predict_datasets(&datasets)
    }
}
