//! Multimodal fusion.
//!
//! Two strategies share one learner:
//!
//! * **Concat**: every modality's vector is stacked into one long input and a
//!   single logistic model is fitted. Missing modalities must be imputed.
//! * **AvgSig**: one logistic model per modality, each trained only on the
//!   patients that have that modality. A patient's score is the plain mean of
//!   the sigmoid outputs of the modalities they actually have.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{fit_logreg, LogRegOptions, LogisticModel};
use crate::error::{Error, Result};
use crate::matrix::{SparseMatrix, SparseVec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityKind {
    Structured,
    Tfidf,
    Lda,
}

/// Neutral placeholder for a missing modality: zeros for TF-IDF and
/// standardized structured features, the uniform distribution for LDA.
pub fn impute_modality(kind: ModalityKind, d: usize) -> Vec<f64> {
    match kind {
        ModalityKind::Lda => vec![1.0 / d as f64; d],
        ModalityKind::Tfidf | ModalityKind::Structured => vec![0.0; d],
    }
}

/// One modality's features over a fixed patient ordering.
#[derive(Debug, Clone)]
pub struct ModalityDataset {
    pub name: String,
    pub kind: ModalityKind,
    /// Rows for unavailable patients are never read.
    pub matrix: SparseMatrix,
    pub available: Vec<bool>,
    pub feature_names: Vec<String>,
}

impl ModalityDataset {
    pub fn n_patients(&self) -> usize {
        self.available.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_cols()
    }

    pub fn available_rows(&self) -> Vec<usize> {
        (0..self.available.len())
            .filter(|&i| self.available[i])
            .collect()
    }

    pub fn spec(&self) -> ModalitySpec {
        ModalitySpec {
            name: self.name.clone(),
            kind: self.kind,
            dim: self.dim(),
        }
    }

    /// Matrix with unavailable rows replaced by the imputation vector.
    fn imputed(&self) -> SparseMatrix {
        let fill = impute_modality(self.kind, self.dim());
        let mut m = SparseMatrix::new(self.dim());
        for (i, &avail) in self.available.iter().enumerate() {
            if avail {
                m.push_sparse_row(&self.matrix.row_sparse(i));
            } else {
                m.push_dense_row(&fill);
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub kind: ModalityKind,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityModel {
    pub modality: ModalitySpec,
    pub model: LogisticModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleModel {
    Concat {
        modalities: Vec<ModalitySpec>,
        model: LogisticModel,
    },
    AvgSig {
        models: Vec<ModalityModel>,
    },
}

/// A patient's features keyed by modality name; a missing key is a missing
/// modality.
pub type PatientFeatures = BTreeMap<String, SparseVec>;

fn check_aligned(modalities: &[ModalityDataset], n: usize) -> Result<()> {
    if modalities.is_empty() {
        return Err(Error::Invalid(
            "ensemble needs at least one modality".into(),
        ));
    }
    for m in modalities {
        if m.n_patients() != n || m.matrix.n_rows() != n {
            return Err(Error::Invalid(format!(
                "modality `{}` has {} patients, labels have {n}",
                m.name,
                m.n_patients()
            )));
        }
    }
    Ok(())
}

pub fn fit_concat(
    modalities: &[ModalityDataset],
    y: &[bool],
    options: &LogRegOptions,
) -> Result<EnsembleModel> {
    check_aligned(modalities, y.len())?;
    let blocks: Vec<SparseMatrix> = modalities.iter().map(ModalityDataset::imputed).collect();
    let refs: Vec<&SparseMatrix> = blocks.iter().collect();
    let x = SparseMatrix::hstack(&refs);
    let model = fit_logreg(&x, y, options)?;
    Ok(EnsembleModel::Concat {
        modalities: modalities.iter().map(ModalityDataset::spec).collect(),
        model,
    })
}

pub fn fit_avgsig(
    modalities: &[ModalityDataset],
    y: &[bool],
    options: &LogRegOptions,
) -> Result<EnsembleModel> {
    check_aligned(modalities, y.len())?;
    let models = modalities
        .iter()
        .map(|m| {
            let rows = m.available_rows();
            let x = m.matrix.select_rows(&rows);
            let ym: Vec<bool> = rows.iter().map(|&i| y[i]).collect();
            let model = fit_logreg(&x, &ym, options).map_err(|e| e.in_modality(&m.name))?;
            Ok(ModalityModel {
                modality: m.spec(),
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel::AvgSig { models })
}

fn sparse_dot(w: &[f64], x: &SparseVec) -> Result<f64> {
    x.iter()
        .map(|&(j, v)| {
            w.get(j).map(|wj| wj * v).ok_or(Error::Dimension {
                expected: w.len(),
                got: j + 1,
            })
        })
        .sum()
}

impl EnsembleModel {
    pub fn modalities(&self) -> Vec<&ModalitySpec> {
        match self {
            EnsembleModel::Concat { modalities, .. } => modalities.iter().collect(),
            EnsembleModel::AvgSig { models } => models.iter().map(|m| &m.modality).collect(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            EnsembleModel::Concat { .. } => "concat",
            EnsembleModel::AvgSig { .. } => "avgsig",
        }
    }

    /// Fused probability for one patient.
    pub fn predict(&self, features: &PatientFeatures) -> Result<f64> {
        match self {
            EnsembleModel::Concat { modalities, model } => {
                let mut z = model.bias;
                let mut offset = 0;
                for spec in modalities {
                    let w = &model.weights[offset..offset + spec.dim];
                    z += match features.get(&spec.name) {
                        Some(x) => sparse_dot(w, x).map_err(|e| e.in_modality(&spec.name))?,
                        None => w
                            .iter()
                            .zip(impute_modality(spec.kind, spec.dim))
                            .map(|(a, b)| a * b)
                            .sum(),
                    };
                    offset += spec.dim;
                }
                Ok(crate::classifier::sigmoid(z))
            }
            EnsembleModel::AvgSig { models } => {
                let probs = models
                    .iter()
                    .filter_map(|m| {
                        features.get(&m.modality.name).map(|x| {
                            sparse_dot(&m.model.weights, x)
                                .map(|z| crate::classifier::sigmoid(z + m.model.bias))
                                .map_err(|e| e.in_modality(&m.modality.name))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                mean_present(&probs)
            }
        }
    }

    /// Score every patient of aligned datasets, matched to the model's
    /// modalities by name.
    pub fn predict_datasets(&self, datasets: &[ModalityDataset]) -> Result<Vec<f64>> {
        let find = |name: &str| {
            datasets
                .iter()
                .find(|d| d.name == name)
                .ok_or_else(|| Error::Invalid(format!("no dataset for modality `{name}`")))
        };
        let n = datasets.first().map_or(0, ModalityDataset::n_patients);
        match self {
            EnsembleModel::Concat { modalities, model } => {
                let blocks = modalities
                    .iter()
                    .map(|spec| {
                        let d = find(&spec.name)?;
                        if d.dim() != spec.dim || d.n_patients() != n {
                            return Err(Error::Dimension {
                                expected: spec.dim,
                                got: d.dim(),
                            }
                            .in_modality(&spec.name));
                        }
                        Ok(d.imputed())
                    })
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&SparseMatrix> = blocks.iter().collect();
                let x = SparseMatrix::hstack(&refs);
                (0..n).map(|i| model.predict_row(&x, i)).collect()
            }
            EnsembleModel::AvgSig { models } => {
                let matched = models
                    .iter()
                    .map(|m| {
                        let d = find(&m.modality.name)?;
                        if d.n_patients() != n {
                            return Err(Error::Invalid(format!(
                                "modality `{}` patient count differs",
                                d.name
                            )));
                        }
                        Ok((m, d))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (0..n)
                    .map(|i| {
                        let probs = matched
                            .iter()
                            .filter(|(_, d)| d.available[i])
                            .map(|(m, d)| {
                                m.model
                                    .predict_row(&d.matrix, i)
                                    .map_err(|e| e.in_modality(&d.name))
                            })
                            .collect::<Result<Vec<f64>>>()?;
                        mean_present(&probs)
                    })
                    .collect()
            }
        }
    }
}

fn mean_present(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Invalid(
            "no modality present for this patient".into(),
        ));
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}
