//! Discriminative-index feature importance for linear modality models.
//!
//! For each feature `k`, the weight is multiplied by the feature's mean in
//! the positive cohort and in the negative cohort; the importance is the
//! absolute gap between the two products, `|θ_k x̄⁺_k − θ_k x̄⁻_k|`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleModel, ModalityDataset};
use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiReport {
    pub mean_true: Vec<f64>,
    pub mean_false: Vec<f64>,
    pub wx_true: Vec<f64>,
    pub wx_false: Vec<f64>,
    pub di: Vec<f64>,
    /// Feature indices by descending DI, ties by ascending index.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub name: String,
    pub score: f64,
    pub di: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityExplanation {
    pub modality: String,
    pub top: Vec<TopFeature>,
    pub report: DiReport,
}

pub fn compute_di(x: &SparseMatrix, y: &[bool], theta: &[f64]) -> Result<DiReport> {
    if x.n_rows() != y.len() {
        return Err(Error::Dimension {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if theta.len() != x.n_cols() {
        return Err(Error::Dimension {
            expected: x.n_cols(),
            got: theta.len(),
        });
    }
    let n_true = y.iter().filter(|&&v| v).count();
    let n_false = y.len() - n_true;
    if n_true == 0 || n_false == 0 {
        return Err(Error::SingleClass(
            "feature importance needs both cohorts".into(),
        ));
    }
    let k = theta.len();
    let mut sum_true = vec![0.0; k];
    let mut sum_false = vec![0.0; k];
    for (i, &label) in y.iter().enumerate() {
        let target = if label { &mut sum_true } else { &mut sum_false };
        let (idx, val) = x.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            target[j] += v;
        }
    }
    let mean_true: Vec<f64> = sum_true.iter().map(|s| s / n_true as f64).collect();
    let mean_false: Vec<f64> = sum_false.iter().map(|s| s / n_false as f64).collect();
    let wx_true: Vec<f64> = theta.iter().zip(&mean_true).map(|(t, m)| t * m).collect();
    let wx_false: Vec<f64> = theta.iter().zip(&mean_false).map(|(t, m)| t * m).collect();
    let di: Vec<f64> = wx_true
        .iter()
        .zip(&wx_false)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| di[b].total_cmp(&di[a]).then(a.cmp(&b)));
    Ok(DiReport {
        mean_true,
        mean_false,
        wx_true,
        wx_false,
        di,
        order,
    })
}

/// The first `k` features of the ranking with DI min-max normalized over all
/// features. `k` larger than the feature count is clamped.
pub fn top_features(report: &DiReport, names: &[String], k: usize) -> Result<Vec<TopFeature>> {
    if names.len() != report.di.len() {
        return Err(Error::Dimension {
            expected: report.di.len(),
            got: names.len(),
        });
    }
    if k > names.len() {
        log::warn!("top-k {k} exceeds feature count {}; clamped", names.len());
    }
    let lo = report.di.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = report.di.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    Ok(report
        .order
        .iter()
        .take(k)
        .map(|&j| TopFeature {
            name: names[j].clone(),
            score: if range > 0.0 {
                (report.di[j] - lo) / range
            } else {
                0.0
            },
            di: report.di[j],
        })
        .collect())
}

/// DI for every modality of an averaged-sigmoid ensemble, each over that
/// modality's available patients. A failure in one modality does not stop
/// the others.
pub fn explain_ensemble(
    model: &EnsembleModel,
    datasets: &[ModalityDataset],
    y: &[bool],
    k: usize,
) -> Result<BTreeMap<String, Result<ModalityExplanation>>> {
    let EnsembleModel::AvgSig { models } = model else {
        return Err(Error::Invalid(
            "feature importance requires an averaged-sigmoid model".into(),
        ));
    };
    let mut out = BTreeMap::new();
    for m in models {
        let name = &m.modality.name;
        let data = datasets
            .iter()
            .find(|d| &d.name == name)
            .ok_or_else(|| Error::Invalid(format!("no dataset for modality `{name}`")))?;
        if data.dim() != m.model.dim() || data.n_patients() != y.len() {
            return Err(Error::Dimension {
                expected: m.model.dim(),
                got: data.dim(),
            }
            .in_modality(name));
        }
        let rows = data.available_rows();
        let x = data.matrix.select_rows(&rows);
        let ym: Vec<bool> = rows.iter().map(|&i| y[i]).collect();
        let result = compute_di(&x, &ym, &m.model.weights)
            .and_then(|report| {
                let top = top_features(&report, &data.feature_names, k)?;
                Ok(ModalityExplanation {
                    modality: name.clone(),
                    top,
                    report,
                })
            })
            .map_err(|e| e.in_modality(name));
        out.insert(name.clone(), result);
    }
    Ok(out)
}
