//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Each sweep resamples every token's topic from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) (n_kw + β) / (n_k + V β)
//! ```
//!
//! with the token's own assignment removed from the counts. A document's
//! topic distribution is read from the final state of the chain as
//! `θ_dk = (n_dk + α) / (N_d + K α)`. Held-out documents are folded in by
//! running the same sampler over their tokens only, with the trained
//! topic-word counts frozen.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub n_topics: usize,
    /// Symmetric document-topic prior; `None` means `5 / n_topics`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub infer_iterations: usize,
}

impl Default for LdaParams {
    fn default() -> Self {
        LdaParams {
            n_topics: 50,
            alpha: None,
            beta: 0.01,
            iterations: 3000,
            infer_iterations: 200,
        }
    }
}

impl LdaParams {
    pub fn resolved_alpha(&self) -> f64 {
        self.alpha.unwrap_or(5.0 / self.n_topics as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicDistribution(pub Vec<f64>);

impl TopicDistribution {
    pub fn uniform(k: usize) -> Self {
        TopicDistribution(vec![1.0 / k as f64; k])
    }

    fn from_counts(counts: &[u32], alpha: f64) -> Self {
        let k = counts.len() as f64;
        let n: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        let denom = n as f64 + k * alpha;
        TopicDistribution(
            counts
                .iter()
                .map(|&c| (f64::from(c) + alpha) / denom)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub n_topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocabulary: Vocabulary,
    /// `n_topics × |V|` token counts per topic.
    pub topic_word_counts: Vec<Vec<u32>>,
    pub topic_totals: Vec<u64>,
    pub train_iterations: usize,
    pub seed: u64,
}

/// Unnormalized full conditional for one token, written into `out`.
///
/// `doc_topic` and `word_topic` are the document's and word's per-topic
/// counts with the token itself already removed.
pub fn conditional_weights(
    doc_topic: &[u32],
    word_topic: &[u32],
    topic_totals: &[u64],
    alpha: f64,
    beta: f64,
    vocab_size: usize,
    out: &mut [f64],
) {
    let vbeta = vocab_size as f64 * beta;
    for k in 0..out.len() {
        out[k] = (f64::from(doc_topic[k]) + alpha) * (f64::from(word_topic[k]) + beta)
            / (topic_totals[k] as f64 + vbeta);
    }
}

/// Draw an index with probability proportional to `weights`.
pub fn draw_index(weights: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    // Rounding can leave `u` marginally above the last weight.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Mutable state of a collapsed Gibbs chain over a training corpus.
pub struct GibbsSampler {
    n_topics: usize,
    alpha: f64,
    beta: f64,
    vocabulary: Vocabulary,
    docs: Vec<Vec<u32>>,
    assignments: Vec<Vec<u32>>,
    /// Flat `doc * K + topic`.
    doc_topic: Vec<u32>,
    /// Flat `word * K + topic`, word-major so one token's column is contiguous.
    word_topic: Vec<u32>,
    topic_totals: Vec<u64>,
    sweeps: usize,
    seed: u64,
    rng: Rng,
    weights: Vec<f64>,
}

impl GibbsSampler {
    pub fn new<S: AsRef<[String]>>(
        docs: &[S],
        n_topics: usize,
        alpha: f64,
        beta: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_topics == 0 {
            return Err(Error::Invalid("LDA needs at least one topic".into()));
        }
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Invalid(format!(
                "LDA priors must be positive (alpha={alpha}, beta={beta})"
            )));
        }
        if docs.iter().all(|d| d.as_ref().is_empty()) {
            return Err(Error::Invalid(
                "LDA needs at least one nonempty training document".into(),
            ));
        }
        let vocabulary = Vocabulary::from_tokens(docs.iter().flat_map(|d| d.as_ref().iter()));
        let docs: Vec<Vec<u32>> = docs
            .iter()
            .map(|d| {
                d.as_ref()
                    .iter()
                    .map(|t| vocabulary.index(t).expect("token in vocabulary") as u32)
                    .collect()
            })
            .collect();

        let mut rng = rng::rng_from(seed, &[]);
        let k = n_topics;
        let mut doc_topic = vec![0u32; docs.len() * k];
        let mut word_topic = vec![0u32; vocabulary.len() * k];
        let mut topic_totals = vec![0u64; k];
        let assignments = docs
            .iter()
            .enumerate()
            .map(|(d, words)| {
                words
                    .iter()
                    .map(|&w| {
                        let z = rng.random_range(0..k as u32);
                        doc_topic[d * k + z as usize] += 1;
                        word_topic[w as usize * k + z as usize] += 1;
                        topic_totals[z as usize] += 1;
                        z
                    })
                    .collect()
            })
            .collect();

        Ok(GibbsSampler {
            n_topics,
            alpha,
            beta,
            vocabulary,
            docs,
            assignments,
            doc_topic,
            word_topic,
            topic_totals,
            sweeps: 0,
            seed,
            rng,
            weights: vec![0.0; k],
        })
    }

    /// Resample every token once.
    pub fn sweep(&mut self) {
        let k = self.n_topics;
        let v = self.vocabulary.len();
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i] as usize;
                let old = self.assignments[d][i] as usize;
                self.doc_topic[d * k + old] -= 1;
                self.word_topic[w * k + old] -= 1;
                self.topic_totals[old] -= 1;

                conditional_weights(
                    &self.doc_topic[d * k..(d + 1) * k],
                    &self.word_topic[w * k..(w + 1) * k],
                    &self.topic_totals,
                    self.alpha,
                    self.beta,
                    v,
                    &mut self.weights,
                );
                let new = draw_index(&self.weights, &mut self.rng);

                self.assignments[d][i] = new as u32;
                self.doc_topic[d * k + new] += 1;
                self.word_topic[w * k + new] += 1;
                self.topic_totals[new] += 1;
            }
        }
        self.sweeps += 1;
    }

    /// Recount everything from the assignments and compare with the
    /// incrementally maintained tables.
    pub fn check_counts(&self) -> std::result::Result<(), String> {
        let k = self.n_topics;
        let mut doc_topic = vec![0u32; self.doc_topic.len()];
        let mut word_topic = vec![0u32; self.word_topic.len()];
        let mut totals = vec![0u64; k];
        for (d, (words, zs)) in self.docs.iter().zip(&self.assignments).enumerate() {
            for (&w, &z) in words.iter().zip(zs) {
                doc_topic[d * k + z as usize] += 1;
                word_topic[w as usize * k + z as usize] += 1;
                totals[z as usize] += 1;
            }
            let row: u64 = self.doc_topic[d * k..(d + 1) * k]
                .iter()
                .map(|&c| u64::from(c))
                .sum();
            if row != words.len() as u64 {
                return Err(format!("doc {d}: Σ_k n_dk = {row}, N_d = {}", words.len()));
            }
        }
        if doc_topic != self.doc_topic {
            return Err("document-topic counts disagree with assignments".into());
        }
        if word_topic != self.word_topic {
            return Err("topic-word counts disagree with assignments".into());
        }
        if totals != self.topic_totals {
            return Err("topic totals disagree with assignments".into());
        }
        for t in 0..k {
            let col: u64 = (0..self.vocabulary.len())
                .map(|w| u64::from(self.word_topic[w * k + t]))
                .sum();
            if col != self.topic_totals[t] {
                return Err(format!(
                    "topic {t}: Σ_w n_kw = {col}, n_k = {}",
                    self.topic_totals[t]
                ));
            }
        }
        Ok(())
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn theta(&self, d: usize) -> TopicDistribution {
        let k = self.n_topics;
        if self.docs[d].is_empty() {
            return TopicDistribution::uniform(k);
        }
        TopicDistribution::from_counts(&self.doc_topic[d * k..(d + 1) * k], self.alpha)
    }

    pub fn thetas(&self) -> Vec<TopicDistribution> {
        (0..self.docs.len()).map(|d| self.theta(d)).collect()
    }

    pub fn into_model(self) -> LdaModel {
        let k = self.n_topics;
        let v = self.vocabulary.len();
        let topic_word_counts = (0..k)
            .map(|t| (0..v).map(|w| self.word_topic[w * k + t]).collect())
            .collect();
        LdaModel {
            n_topics: k,
            alpha: self.alpha,
            beta: self.beta,
            vocabulary: self.vocabulary,
            topic_word_counts,
            topic_totals: self.topic_totals,
            train_iterations: self.sweeps,
            seed: self.seed,
        }
    }
}

/// Train on `train_docs` and return the model plus each training document's
/// topic distribution from the final sweep.
pub fn fit_lda<S: AsRef<[String]>>(
    train_docs: &[S],
    params: &LdaParams,
    seed: u64,
) -> Result<(LdaModel, Vec<TopicDistribution>)> {
    if params.iterations == 0 {
        return Err(Error::Invalid("LDA needs at least one iteration".into()));
    }
    let mut sampler = GibbsSampler::new(
        train_docs,
        params.n_topics,
        params.resolved_alpha(),
        params.beta,
        seed,
    )?;
    for _ in 0..params.iterations {
        sampler.sweep();
        #[cfg(debug_assertions)]
        if let Err(msg) = sampler.check_counts() {
            panic!(
                "Gibbs count invariant broken after sweep {}: {msg}",
                sampler.sweeps()
            );
        }
    }
    let thetas = sampler.thetas();
    Ok((sampler.into_model(), thetas))
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.n_topics
    }

    /// Fold-in inference for a held-out document.
    pub fn infer(&self, doc: &[String], iterations: usize, seed: u64) -> TopicDistribution {
        let k = self.n_topics;
        let words: Vec<usize> = doc
            .iter()
            .filter_map(|t| self.vocabulary.index(t))
            .collect();
        if words.is_empty() {
            return TopicDistribution::uniform(k);
        }
        // Per-token frozen topic counts, gathered once.
        let columns: Vec<Vec<u32>> = words
            .iter()
            .map(|&w| (0..k).map(|t| self.topic_word_counts[t][w]).collect())
            .collect();
        let v = self.vocabulary.len();
        let mut rng = rng::rng_from(seed, &[]);
        let mut doc_topic = vec![0u32; k];
        let mut z: Vec<usize> = words
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k as u32) as usize;
                doc_topic[t] += 1;
                t
            })
            .collect();
        let mut weights = vec![0.0; k];
        for _ in 0..iterations {
            for i in 0..words.len() {
                doc_topic[z[i]] -= 1;
                conditional_weights(
                    &doc_topic,
                    &columns[i],
                    &self.topic_totals,
                    self.alpha,
                    self.beta,
                    v,
                    &mut weights,
                );
                z[i] = draw_index(&weights, &mut rng);
                doc_topic[z[i]] += 1;
            }
        }
        TopicDistribution::from_counts(&doc_topic, self.alpha)
    }

    /// The `n` most frequent tokens of `topic`, ties broken lexicographically.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<&str>> {
        let counts = self.topic_word_counts.get(topic).ok_or_else(|| {
            Error::Invalid(format!(
                "topic {topic} out of range (model has {})",
                self.n_topics
            ))
        })?;
        let mut order: Vec<usize> = (0..counts.len()).collect();
        // Vocabulary indices are already lexicographic.
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(n)
            .map(|w| self.vocabulary.token(w))
            .collect())
    }

    /// Structural checks for a deserialized model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Model(format!("LDA: {m}")));
        if self.n_topics == 0
            || self.topic_word_counts.len() != self.n_topics
            || self.topic_totals.len() != self.n_topics
        {
            return bad("topic count mismatch");
        }
        if !self.vocabulary.is_sorted_unique() {
            return bad("vocabulary not sorted");
        }
        for (row, &total) in self.topic_word_counts.iter().zip(&self.topic_totals) {
            if row.len() != self.vocabulary.len() {
                return bad("topic-word row width differs from vocabulary");
            }
            if row.iter().map(|&c| u64::from(c)).sum::<u64>() != total {
                return bad("topic totals inconsistent with counts");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn tiny_params(k: usize, iterations: usize) -> LdaParams {
        LdaParams {
            n_topics: k,
            iterations,
            ..LdaParams::default()
        }
    }

    #[test]
    fn default_alpha_is_five_over_k() {
        let p = LdaParams::default();
        assert_eq!(p.n_topics, 50);
        assert_eq!(p.resolved_alpha(), 0.1);
        assert_eq!(p.iterations, 3000);
    }

    #[test]
    fn single_topic_gives_unit_theta() {
        let docs = vec![toks("a b c"), toks("c d"), vec![]];
        let (model, thetas) = fit_lda(&docs, &tiny_params(1, 5), 3).unwrap();
        for t in &thetas {
            assert_eq!(t.0, vec![1.0]);
        }
        assert_eq!(model.infer(&toks("a d"), 10, 1).0, vec![1.0]);
    }

    #[test]
    fn empty_docs_get_uniform() {
        let docs = vec![toks("a b"), vec![]];
        let (model, thetas) = fit_lda(&docs, &tiny_params(4, 3), 3).unwrap();
        assert_eq!(thetas[1], TopicDistribution::uniform(4));
        assert_eq!(model.infer(&[], 10, 0), TopicDistribution::uniform(4));
        assert_eq!(
            model.infer(&toks("unseen words"), 10, 0),
            TopicDistribution::uniform(4)
        );
    }

    #[test]
    fn rejects_degenerate_input() {
        let empty: Vec<Vec<String>> = vec![vec![], vec![]];
        assert!(fit_lda(&empty, &tiny_params(2, 1), 0).is_err());
        assert!(fit_lda(&[toks("a")], &tiny_params(0, 1), 0).is_err());
        assert!(fit_lda(&[toks("a")], &tiny_params(2, 0), 0).is_err());
    }

    #[test]
    fn top_words_tie_break_and_range() {
        let model = LdaModel {
            n_topics: 1,
            alpha: 5.0,
            beta: 0.01,
            vocabulary: Vocabulary::from_sorted(vec!["a".into(), "b".into(), "c".into()]),
            topic_word_counts: vec![vec![5, 5, 1]],
            topic_totals: vec![11],
            train_iterations: 0,
            seed: 0,
        };
        assert_eq!(model.top_words(0, 2).unwrap(), ["a", "b"]);
        assert!(model.top_words(0, 0).unwrap().is_empty());
        assert!(model.top_words(1, 2).is_err());
        model.validate().unwrap();
    }

    #[test]
    fn counts_stay_consistent() {
        let docs = vec![toks("a b c a"), toks("c d e"), toks("e e f a")];
        let mut s = GibbsSampler::new(&docs, 3, 0.1, 0.01, 9).unwrap();
        s.check_counts().unwrap();
        for _ in 0..20 {
            s.sweep();
            s.check_counts().unwrap();
        }
        let m = s.into_model();
        m.validate().unwrap();
    }

    #[test]
    fn draw_index_skips_zero_weights() {
        let mut rng = rng::rng_from(1, &[]);
        for _ in 0..1000 {
            let k = draw_index(&[0.0, 1.0, 0.0, 2.0], &mut rng);
            assert!(k == 1 || k == 3);
        }
    }
}
