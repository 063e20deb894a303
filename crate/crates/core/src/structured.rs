//! Structured-field encoding: one-hot expansion of categorical columns,
//! mean imputation of missing numerics, and standardization with
//! training-set statistics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

/// Infer each column's kind from its non-missing cells: all parse as numbers
/// and lie in {0, 1} gives binary, all numbers gives numeric, anything else
/// is categorical. Columns with no values at all are reported as numeric and
/// rejected later by [`StructuredEncoder::fit`].
pub fn infer_schema<'a, I>(names: &[String], rows: I) -> Vec<ColumnSchema>
where
    I: IntoIterator<Item = &'a [Option<String>]>,
{
    let mut numeric = vec![true; names.len()];
    let mut binary = vec![true; names.len()];
    for row in rows {
        for (j, cell) in row.iter().enumerate() {
            let Some(v) = cell else { continue };
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => binary[j] &= x == 0.0 || x == 1.0,
                _ => {
                    numeric[j] = false;
                    binary[j] = false;
                }
            }
        }
    }
    names
        .iter()
        .enumerate()
        .map(|(j, name)| ColumnSchema {
            name: name.clone(),
            kind: if !numeric[j] {
                ColumnKind::Categorical
            } else if binary[j] {
                ColumnKind::Binary
            } else {
                ColumnKind::Numeric
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted training levels; empty for numeric and binary columns.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Training mean used to fill missing numeric cells.
    pub fill: f64,
}

impl EncodedColumn {
    fn width(&self) -> usize {
        match self.kind {
            ColumnKind::Categorical => self.levels.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredEncoder {
    pub columns: Vec<EncodedColumn>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub feature_names: Vec<String>,
}

fn parse_number(column: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::NonNumeric {
            column: column.to_string(),
            value: value.to_string(),
        })
}

impl StructuredEncoder {
    pub fn fit(schema: &[ColumnSchema], rows: &[&[Option<String>]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Invalid(format!(
                "structured encoder needs at least 2 training rows, got {}",
                rows.len()
            )));
        }
        let mut columns = Vec::with_capacity(schema.len());
        for (j, col) in schema.iter().enumerate() {
            let present: Vec<&str> = rows
                .iter()
                .map(|r| check_width(r, schema.len()).map(|_| r[j].as_deref()))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            if present.is_empty() {
                return Err(Error::EmptyColumn(col.name.clone()));
            }
            let encoded = match col.kind {
                ColumnKind::Categorical => EncodedColumn {
                    name: col.name.clone(),
                    kind: col.kind,
                    levels: present
                        .iter()
                        .map(|s| s.to_string())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect(),
                    fill: 0.0,
                },
                ColumnKind::Numeric | ColumnKind::Binary => {
                    let values = present
                        .iter()
                        .map(|v| parse_number(&col.name, v))
                        .collect::<Result<Vec<_>>>()?;
                    EncodedColumn {
                        name: col.name.clone(),
                        kind: col.kind,
                        levels: Vec::new(),
                        fill: values.iter().sum::<f64>() / values.len() as f64,
                    }
                }
            };
            columns.push(encoded);
        }

        let feature_names: Vec<String> = columns
            .iter()
            .flat_map(|c| match c.kind {
                ColumnKind::Categorical => c
                    .levels
                    .iter()
                    .map(|l| format!("{}={}", c.name, l))
                    .collect(),
                _ => vec![c.name.clone()],
            })
            .collect();

        let mut encoder = StructuredEncoder {
            columns,
            means: vec![0.0; feature_names.len()],
            stds: vec![1.0; feature_names.len()],
            feature_names,
        };
        let raw = rows
            .iter()
            .map(|r| encoder.expand(r).map(|(x, _)| x))
            .collect::<Result<Vec<_>>>()?;
        let n = raw.len() as f64;
        for j in 0..encoder.dim() {
            let mean = raw.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = raw.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            encoder.means[j] = mean;
            encoder.stds[j] = var.sqrt();
        }
        Ok(encoder)
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Raw (unstandardized) expansion plus a mask of outputs pinned to zero
    /// because their categorical level was not seen in training.
    fn expand(&self, row: &[Option<String>]) -> Result<(Vec<f64>, Vec<bool>)> {
        check_width(row, self.columns.len())?;
        let mut out = Vec::with_capacity(self.dim());
        let mut pinned = Vec::with_capacity(self.dim());
        for (col, cell) in self.columns.iter().zip(row) {
            match col.kind {
                ColumnKind::Categorical => {
                    let hit = cell
                        .as_deref()
                        .map(|v| col.levels.binary_search_by(|l| l.as_str().cmp(v)));
                    let unseen = matches!(hit, Some(Err(_)));
                    for k in 0..col.levels.len() {
                        out.push(if hit == Some(Ok(k)) { 1.0 } else { 0.0 });
                        pinned.push(unseen);
                    }
                }
                ColumnKind::Numeric | ColumnKind::Binary => {
                    out.push(match cell {
                        Some(v) => parse_number(&col.name, v)?,
                        None => col.fill,
                    });
                    pinned.push(false);
                }
            }
        }
        debug_assert_eq!(
            out.len(),
            self.columns.iter().map(EncodedColumn::width).sum::<usize>()
        );
        Ok((out, pinned))
    }

    /// Standardized feature vector for one raw row.
    pub fn encode(&self, row: &[Option<String>]) -> Result<Vec<f64>> {
        let (raw, pinned) = self.expand(row)?;
        Ok(raw
            .iter()
            .zip(&pinned)
            .enumerate()
            .map(|(j, (&x, &pin))| {
                if pin || self.stds[j] == 0.0 {
                    0.0
                } else {
                    (x - self.means[j]) / self.stds[j]
                }
            })
            .collect())
    }
}

fn check_width(row: &[Option<String>], expected: usize) -> Result<()> {
    if row.len() != expected {
        return Err(Error::RowWidth {
            expected,
            got: row.len(),
        });
    }
    Ok(())
}
