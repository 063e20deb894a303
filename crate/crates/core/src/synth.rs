//! Synthetic cohorts shaped like a transplant readmission dataset: a
//! structured table plus three note types, each note type missing for a
//! configurable share of patients.
//!
//! Labels are Bernoulli draws. Structured signal columns are Gaussians whose
//! mean shifts with the label; categorical columns skew their level
//! frequencies with the label. Notes follow an LDA generative process over
//! topics with mostly disjoint vocabulary blocks, where a few "signal" topics
//! get extra document-prior mass depending on the label.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, NoteType, RawNote};
use crate::error::{Error, Result};
use crate::eval::render_table;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuredSynth {
    pub n_numeric: usize,
    pub n_binary: usize,
    pub n_categorical: usize,
    pub levels: usize,
    /// How many numeric columns carry label signal.
    pub n_signal: usize,
    /// Mean shift between classes, in standard deviations.
    pub signal_strength: f64,
    /// Share of numeric cells left empty.
    pub missing_cell_rate: f64,
}

impl Default for StructuredSynth {
    fn default() -> Self {
        // 64 + 10 + 6 = 80 raw predictors, 64 + 10 + 18 = 92 encoded features.
        StructuredSynth {
            n_numeric: 64,
            n_binary: 10,
            n_categorical: 6,
            levels: 3,
            n_signal: 8,
            signal_strength: 0.3,
            missing_cell_rate: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoteSynth {
    pub missing_rate: f64,
    /// Inclusive range of notes per patient.
    pub notes_per_patient: (usize, usize),
    /// Inclusive range of words per note.
    pub doc_length_range: (usize, usize),
    pub n_latent_topics: usize,
    pub n_signal_topics: usize,
    pub vocab_size: usize,
    /// Extra Dirichlet mass on the label's signal topics.
    pub signal_strength: f64,
    /// Base symmetric Dirichlet concentration of each patient's topic mix.
    pub doc_concentration: f64,
    /// Share of each topic's mass spread over the whole vocabulary.
    pub topic_leak: f64,
}

impl Default for NoteSynth {
    fn default() -> Self {
        NoteSynth {
            missing_rate: 0.3,
            notes_per_patient: (1, 3),
            doc_length_range: (30, 80),
            n_latent_topics: 20,
            n_signal_topics: 4,
            vocab_size: 2000,
            signal_strength: 0.2,
            doc_concentration: 0.2,
            topic_leak: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub positive_rate: f64,
    pub structured: StructuredSynth,
    pub consultations: NoteSynth,
    pub progress: NoteSynth,
    pub selection_conference: NoteSynth,
    /// Chance that a patient gets one extra note per type dated after discharge.
    pub post_discharge_rate: f64,
    /// Patients that appear only in the notes file.
    pub n_note_only_patients: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 500,
            positive_rate: 0.307,
            structured: StructuredSynth::default(),
            consultations: NoteSynth::default(),
            progress: NoteSynth::default(),
            selection_conference: NoteSynth::default(),
            post_discharge_rate: 0.05,
            n_note_only_patients: 0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn note(&self, t: NoteType) -> &NoteSynth {
        match t {
            NoteType::Consultations => &self.consultations,
            NoteType::Progress => &self.progress,
            NoteType::SelectionConference => &self.selection_conference,
        }
    }

    pub fn note_mut(&mut self, t: NoteType) -> &mut NoteSynth {
        match t {
            NoteType::Consultations => &mut self.consultations,
            NoteType::Progress => &mut self.progress,
            NoteType::SelectionConference => &mut self.selection_conference,
        }
    }

    /// Apply `f` to all three note-type configurations.
    pub fn for_each_note(&mut self, mut f: impl FnMut(&mut NoteSynth)) {
        for t in NoteType::ALL {
            f(self.note_mut(t));
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("synth config: {m}")));
        if self.n_patients < 2 {
            return bad("n_patients must be at least 2".into());
        }
        let rate = |name: &str, r: f64| -> Result<()> {
            if (0.0..=1.0).contains(&r) {
                Ok(())
            } else {
                Err(Error::Invalid(format!(
                    "synth config: {name} = {r} is not in [0, 1]"
                )))
            }
        };
        rate("positive_rate", self.positive_rate)?;
        rate("post_discharge_rate", self.post_discharge_rate)?;
        let s = &self.structured;
        rate("structured.missing_cell_rate", s.missing_cell_rate)?;
        if s.n_signal > s.n_numeric {
            return bad(format!(
                "structured.n_signal {} exceeds n_numeric {}",
                s.n_signal, s.n_numeric
            ));
        }
        if s.n_categorical > 0 && s.levels < 2 {
            return bad("structured.levels must be at least 2".into());
        }
        if s.n_numeric + s.n_binary + s.n_categorical == 0 {
            return bad("structured table needs at least one column".into());
        }
        for t in NoteType::ALL {
            let n = self.note(t);
            rate(&format!("{t}.missing_rate"), n.missing_rate)?;
            rate(&format!("{t}.topic_leak"), n.topic_leak)?;
            if n.doc_length_range.0 == 0 || n.doc_length_range.0 > n.doc_length_range.1 {
                return bad(format!("{t}.doc_length_range must be positive and ordered"));
            }
            if n.notes_per_patient.0 == 0 || n.notes_per_patient.0 > n.notes_per_patient.1 {
                return bad(format!(
                    "{t}.notes_per_patient must be positive and ordered"
                ));
            }
            if n.n_latent_topics == 0 {
                return bad(format!("{t}.n_latent_topics must be positive"));
            }
            if n.vocab_size < n.n_latent_topics {
                return bad(format!(
                    "{t}.vocab_size {} is smaller than n_latent_topics {}",
                    n.vocab_size, n.n_latent_topics
                ));
            }
            if n.n_signal_topics > n.n_latent_topics {
                return bad(format!("{t}.n_signal_topics exceeds n_latent_topics"));
            }
            if n.doc_concentration.is_nan()
                || n.doc_concentration <= 0.0
                || n.signal_strength.is_nan()
                || n.signal_strength < 0.0
            {
                return bad(format!(
                    "{t}: doc_concentration must be > 0 and signal_strength >= 0"
                ));
            }
        }
        Ok(())
    }
}

/// Generated files, as text in the corpus formats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutput {
    pub structured_csv: String,
    pub notes_jsonl: String,
}

/// Word `index` of a note type's vocabulary: a type-specific letter prefix
/// followed by the index in base 26, at least three letters long. Every
/// word is purely alphabetic so it survives tokenization unchanged.
pub fn synth_word(t: NoteType, index: usize) -> String {
    let prefix = match t {
        NoteType::Consultations => 'k',
        NoteType::Progress => 'p',
        NoteType::SelectionConference => 'x',
    };
    let mut letters = Vec::new();
    let mut i = index;
    loop {
        letters.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 && letters.len() >= 3 {
            break;
        }
    }
    std::iter::once(prefix)
        .chain(letters.into_iter().rev())
        .collect()
}

fn bernoulli(rng: &mut Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn dirichlet(rng: &mut Rng, alpha: &[f64]) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.into_iter().map(|d| d / total).collect()
    } else {
        // All draws underflowed; fall back to a point mass.
        let k = rng.random_range(0..alpha.len());
        (0..alpha.len())
            .map(|j| if j == k { 1.0 } else { 0.0 })
            .collect()
    }
}

fn categorical(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Word distribution of each topic: a random profile over the topic's own
/// vocabulary block plus `leak` mass spread uniformly.
fn topic_word_distributions(rng: &mut Rng, cfg: &NoteSynth) -> Vec<Vec<f64>> {
    let k = cfg.n_latent_topics;
    let v = cfg.vocab_size;
    (0..k)
        .map(|t| {
            let lo = t * v / k;
            let hi = (t + 1) * v / k;
            let block = dirichlet(rng, &vec![1.0; hi - lo]);
            let mut phi = vec![cfg.topic_leak / v as f64; v];
            for (j, p) in block.into_iter().enumerate() {
                phi[lo + j] += (1.0 - cfg.topic_leak) * p;
            }
            phi
        })
        .collect()
}

/// Cumulative table for repeated categorical draws.
struct Cumulative(Vec<f64>);

impl Cumulative {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        Cumulative(
            weights
                .iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect(),
        )
    }

    fn draw(&self, rng: &mut Rng) -> usize {
        let u = rng.random::<f64>() * self.0.last().copied().unwrap_or(0.0);
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

const FILLER: [&str; 8] = ["the", "patient", "was", "and", "of", "with", "is", "on"];

fn note_text(
    rng: &mut Rng,
    t: NoteType,
    theta: &Cumulative,
    phis: &[Cumulative],
    len: usize,
) -> String {
    let mut text = String::new();
    for i in 0..len {
        if i > 0 {
            text.push(' ');
        }
        let r = rng.random::<f64>();
        if r < 0.15 {
            text.push_str(FILLER[rng.random_range(0..FILLER.len())]);
            text.push(' ');
        } else if r < 0.18 {
            let _ = write!(text, "{} ", rng.random_range(1..400));
        }
        let topic = theta.draw(rng);
        text.push_str(&synth_word(t, phis[topic].draw(rng)));
    }
    if bernoulli(rng, 0.5) {
        text.push('.');
    }
    text
}

fn fmt_num(x: f64) -> String {
    format!("{x:.4}")
}

pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = rng::rng_from(config.seed, &[rng::STREAM_SYNTH]);
    let n = config.n_patients;
    let s = &config.structured;

    let ids: Vec<String> = (0..n).map(|i| format!("P{:05}", i + 1)).collect();
    let labels: Vec<bool> = (0..n)
        .map(|_| bernoulli(&mut rng, config.positive_rate))
        .collect();
    let base = NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid date");
    let discharge: Vec<NaiveDate> = (0..n)
        .map(|_| base + Duration::days(rng.random_range(0..2500)))
        .collect();

    let mut header = vec![
        "patient_id".to_string(),
        "label".into(),
        corpus::DISCHARGE_COLUMN.into(),
    ];
    header.extend((0..s.n_numeric).map(|j| format!("num_{j:02}")));
    header.extend((0..s.n_binary).map(|j| format!("bin_{j:02}")));
    header.extend((0..s.n_categorical).map(|j| format!("cat_{j:02}")));
    let mut csv = header.join(",");
    csv.push('\n');

    let binary_rates: Vec<f64> = (0..s.n_binary)
        .map(|_| rng.random_range(0.1..0.6))
        .collect();
    for i in 0..n {
        let sign = if labels[i] { 0.5 } else { -0.5 };
        let mut row = vec![
            ids[i].clone(),
            u8::from(labels[i]).to_string(),
            discharge[i].to_string(),
        ];
        for j in 0..s.n_numeric {
            let z: f64 = StandardNormal.sample(&mut rng);
            let shift = if j < s.n_signal {
                sign * s.signal_strength
            } else {
                0.0
            };
            let value = 10.0 * (z + shift) + 5.0 * j as f64;
            if bernoulli(&mut rng, s.missing_cell_rate) {
                row.push(String::new());
            } else {
                row.push(fmt_num(value));
            }
        }
        for &p in &binary_rates {
            row.push(u8::from(bernoulli(&mut rng, p)).to_string());
        }
        for _ in 0..s.n_categorical {
            let mut w = vec![1.0; s.levels];
            w[0] += if labels[i] { s.signal_strength } else { 0.0 };
            let level = categorical(&mut rng, &w);
            row.push(format!("L{}", (b'A' + level as u8) as char));
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let mut notes: Vec<RawNote> = Vec::new();
    let note_only: Vec<String> = (0..config.n_note_only_patients)
        .map(|i| format!("Q{:05}", i + 1))
        .collect();
    for t in NoteType::ALL {
        let cfg = config.note(t);
        let phis: Vec<Cumulative> = topic_word_distributions(&mut rng, cfg)
            .iter()
            .map(|p| Cumulative::new(p))
            .collect();
        let k = cfg.n_latent_topics;
        // Signal topics alternate between favouring positives and negatives.
        let prior = |label: bool| -> Vec<f64> {
            (0..k)
                .map(|j| {
                    let favoured = j < cfg.n_signal_topics && ((j % 2 == 0) == label);
                    cfg.doc_concentration + if favoured { cfg.signal_strength } else { 0.0 }
                })
                .collect()
        };
        let (pos_prior, neg_prior) = (prior(true), prior(false));
        let days_before = match t {
            NoteType::Consultations => (30, 365),
            NoteType::Progress => (0, 14),
            NoteType::SelectionConference => (60, 900),
        };
        let patients = (0..n)
            .map(|i| (ids[i].as_str(), labels[i], discharge[i]))
            .chain(note_only.iter().map(|id| (id.as_str(), false, base)));
        for (id, label, dis) in patients {
            if bernoulli(&mut rng, cfg.missing_rate) {
                continue;
            }
            let theta = Cumulative::new(&dirichlet(
                &mut rng,
                if label { &pos_prior } else { &neg_prior },
            ));
            let n_notes = rng.random_range(cfg.notes_per_patient.0..=cfg.notes_per_patient.1);
            let late = bernoulli(&mut rng, config.post_discharge_rate);
            for j in 0..n_notes + usize::from(late) {
                let date = if j < n_notes {
                    dis - Duration::days(rng.random_range(days_before.0..=days_before.1))
                } else {
                    dis + Duration::days(rng.random_range(1..60))
                };
                let len = rng.random_range(cfg.doc_length_range.0..=cfg.doc_length_range.1);
                notes.push(RawNote {
                    patient_id: id.to_string(),
                    note_type: t,
                    date: Some(date),
                    text: note_text(&mut rng, t, &theta, &phis, len),
                });
            }
        }
    }

    let mut jsonl = String::new();
    for note in &notes {
        jsonl.push_str(&serde_json::to_string(note).map_err(|e| Error::Invalid(e.to_string()))?);
        jsonl.push('\n');
    }
    Ok(SynthOutput {
        structured_csv: csv,
        notes_jsonl: jsonl,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub modality: String,
    pub patients: usize,
    /// `None` for the structured table.
    pub notes: Option<usize>,
    pub common_patients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: Vec<SummaryRow>,
}

fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl DatasetSummary {
    /// Modality | Patients | Notes | Common Patients.
    pub fn to_table(&self) -> String {
        let rows: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.modality.clone(),
                    thousands(r.patients),
                    r.notes.map_or_else(|| "N.A.".to_string(), thousands),
                    thousands(r.common_patients),
                ]
            })
            .collect();
        render_table(&["Modality", "Patients", "Notes", "Common Patients"], &rows)
    }
}

/// Per-modality patient and note counts of a dataset on disk.
pub fn describe(structured_path: &Path, notes_path: &Path) -> Result<DatasetSummary> {
    let table = corpus::read_structured(structured_path)?;
    let notes = corpus::read_notes(notes_path)?;
    let known: HashSet<&str> = table.rows.iter().map(|r| r.patient_id.as_str()).collect();
    let mut per_type: BTreeMap<NoteType, (BTreeSet<&str>, usize)> = BTreeMap::new();
    for note in &notes {
        let e = per_type.entry(note.note_type).or_default();
        e.0.insert(note.patient_id.as_str());
        e.1 += 1;
    }
    let mut rows = vec![SummaryRow {
        modality: "Structured".into(),
        patients: table.rows.len(),
        notes: None,
        common_patients: table.rows.len(),
    }];
    for t in NoteType::ALL {
        let (patients, count) = per_type.remove(&t).unwrap_or_default();
        rows.push(SummaryRow {
            modality: t.display_name().into(),
            common_patients: patients.iter().filter(|p| known.contains(*p)).count(),
            patients: patients.len(),
            notes: Some(count),
        });
    }
    Ok(DatasetSummary { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_are_alphabetic_and_distinct() {
        assert_eq!(synth_word(NoteType::Progress, 0), "paaa");
        assert_eq!(synth_word(NoteType::Progress, 1), "paab");
        assert_eq!(synth_word(NoteType::Progress, 27), "pabb");
        assert_eq!(synth_word(NoteType::Consultations, 26 * 26 * 26), "kbaaa");
        let words: HashSet<String> = (0..5000)
            .map(|i| synth_word(NoteType::SelectionConference, i))
            .collect();
        assert_eq!(words.len(), 5000);
        let sw = corpus::Stopwords::english();
        assert!(words
            .iter()
            .all(|w| w.bytes().all(|b| b.is_ascii_lowercase()) && !sw.contains(w)));
    }

    #[test]
    fn rejects_impossible_configs() {
        let mut c = SynthConfig::default();
        c.progress.vocab_size = 5;
        c.progress.n_latent_topics = 10;
        assert!(generate(&c).is_err());
        let c = SynthConfig {
            positive_rate: 1.5,
            ..SynthConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = SynthConfig::default();
        c.consultations.doc_length_range = (0, 3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(2060), "2,060");
        assert_eq!(thousands(202296), "202,296");
    }
}
