//! TF-IDF vectorization of merged note documents.
//!
//! Weights are raw term counts times a smoothed inverse document frequency,
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, and every output vector is
//! scaled to unit L2 norm.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SparseVec;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfOptions {
    /// Drop tokens appearing in fewer than this many training documents.
    pub min_df: usize,
    /// Drop tokens appearing in more than this fraction of training documents.
    pub max_df: f64,
}

impl Default for TfidfOptions {
    fn default() -> Self {
        TfidfOptions {
            min_df: 1,
            max_df: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub n_train_docs: usize,
}

pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn fit_tfidf<S: AsRef<[String]>>(
    train_docs: &[S],
    options: &TfidfOptions,
) -> Result<TfidfModel> {
    if train_docs.is_empty() {
        return Err(Error::Invalid(
            "TF-IDF needs at least one training document".into(),
        ));
    }
    let n = train_docs.len();
    let mut df: HashMap<&String, usize> = HashMap::new();
    for doc in train_docs {
        let distinct: HashSet<&String> = doc.as_ref().iter().collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    let max_df = (options.max_df * n as f64).floor() as usize;
    let vocabulary = Vocabulary::from_tokens(
        df.iter()
            .filter(|(_, &d)| d >= options.min_df && d <= max_df.max(1))
            .map(|(t, _)| *t),
    );
    let idf = vocabulary
        .tokens()
        .iter()
        .map(|t| smoothed_idf(n, df[t]))
        .collect();
    Ok(TfidfModel {
        vocabulary,
        idf,
        n_train_docs: n,
    })
}

impl TfidfModel {
    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    /// Unit-norm TF-IDF vector; all-zero when no token is in the vocabulary.
    pub fn transform(&self, doc: &[String]) -> SparseVec {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(j) = self.vocabulary.index(t) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts
            .into_iter()
            .map(|(j, c)| (j, c * self.idf[j]))
            .collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }
}
