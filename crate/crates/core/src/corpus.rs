//! Loading patients and their clinical notes.
//!
//! A corpus joins two files: a structured CSV (one row per patient, carrying
//! the readmission label) and a JSONL stream of raw notes. Every note type a
//! patient has is merged into a single token sequence after date filtering,
//! tokenization and stopword removal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name of the optional structured column holding each patient's discharge
/// date. It is used only for note cutoffs and never becomes a feature.
pub const DISCHARGE_COLUMN: &str = "discharge_date";

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteType {
    Consultations,
    Progress,
    SelectionConference,
}

impl NoteType {
    /// Fixed modality order.
    pub const ALL: [NoteType; 3] = [
        NoteType::Consultations,
        NoteType::Progress,
        NoteType::SelectionConference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoteType::Consultations => "consultations",
            NoteType::Progress => "progress",
            NoteType::SelectionConference => "selection_conference",
        }
    }

    /// Row label used in dataset summaries.
    pub fn display_name(self) -> &'static str {
        match self {
            NoteType::Consultations => "Consultations",
            NoteType::Progress => "Progress",
            NoteType::SelectionConference => "Selection Conf. Ref.",
        }
    }

    pub fn index(self) -> usize {
        match self {
            NoteType::Consultations => 0,
            NoteType::Progress => 1,
            NoteType::SelectionConference => 2,
        }
    }

    pub fn parse(s: &str) -> Option<NoteType> {
        NoteType::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for NoteType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawNote {
    pub patient_id: String,
    pub note_type: NoteType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub text: String,
}

#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// The bundled list of 179 common English stopwords.
    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn none() -> Self {
        Stopwords(HashSet::new())
    }

    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords(iter.into_iter().map(Into::into).collect())
    }
}

/// Which notes survive the date filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    /// Global cutoff applied to patients without a discharge date.
    pub date: Option<NaiveDate>,
    /// Use each patient's `discharge_date` column when present.
    pub use_discharge_date: bool,
    /// Note types the cutoff applies to.
    pub note_types: Vec<NoteType>,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy {
            date: None,
            use_discharge_date: true,
            note_types: NoteType::ALL.to_vec(),
        }
    }
}

impl CutoffPolicy {
    pub fn cutoff_for(
        &self,
        discharge: Option<NaiveDate>,
        note_type: NoteType,
    ) -> Option<NaiveDate> {
        if !self.note_types.contains(&note_type) {
            return None;
        }
        discharge.filter(|_| self.use_discharge_date).or(self.date)
    }
}

#[derive(Debug, Clone, Default)]
pub struct CorpusConfig {
    pub stopwords: Stopwords,
    pub cutoff: CutoffPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub label: bool,
    /// Raw structured cells in column order; `None` is a missing cell.
    pub structured: Vec<Option<String>>,
    pub documents: BTreeMap<NoteType, Vec<String>>,
    pub discharge_date: Option<NaiveDate>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub patients: Vec<PatientRecord>,
    pub note_types: Vec<NoteType>,
    /// Names of the structured feature columns (label and id excluded).
    pub feature_columns: Vec<String>,
    /// Patients that had notes but no structured row.
    pub dropped_note_only: usize,
}

impl Corpus {
    pub fn labels(&self) -> Vec<bool> {
        self.patients.iter().map(|p| p.label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.patients.iter().map(|p| p.patient_id.clone()).collect()
    }
}

/// Split text into maximal runs of ASCII letters, lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

pub fn remove_stopwords(tokens: Vec<String>, stopwords: &Stopwords) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| !stopwords.contains(t))
        .collect()
}

/// Merge one patient's notes of one type into a single document.
///
/// Returns `None` when no note survives the cutoff. Notes without a date are
/// always kept and placed after the dated ones.
pub fn merge_patient_notes(
    notes: &[RawNote],
    patient_id: &str,
    note_type: NoteType,
    cutoff: Option<NaiveDate>,
    stopwords: &Stopwords,
) -> Option<Vec<String>> {
    let mut kept: Vec<&RawNote> = notes
        .iter()
        .filter(|n| n.patient_id == patient_id && n.note_type == note_type)
        .filter(|n| match (n.date, cutoff) {
            (Some(d), Some(c)) => d <= c,
            _ => true,
        })
        .collect();
    if kept.is_empty() {
        return None;
    }
    // `None` sorts before `Some`, so order on (is_undated, date); stable.
    kept.sort_by_key(|n| (n.date.is_none(), n.date));
    let tokens = kept
        .iter()
        .flat_map(|n| tokenize(&n.text))
        .collect::<Vec<_>>();
    Some(remove_stopwords(tokens, stopwords))
}

/// The structured CSV as read from disk, before any encoding.
#[derive(Debug, Clone)]
pub struct StructuredTable {
    pub columns: Vec<String>,
    pub rows: Vec<StructuredRow>,
}

#[derive(Debug, Clone)]
pub struct StructuredRow {
    pub patient_id: String,
    pub label: bool,
    pub discharge_date: Option<NaiveDate>,
    pub cells: Vec<Option<String>>,
}

pub fn read_structured(path: &Path) -> Result<StructuredTable> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("patient_id") || header.get(1) != Some("label") {
        return Err(parse_err(
            1,
            "header must start with `patient_id,label`".into(),
        ));
    }
    let discharge_col = header.iter().position(|h| h == DISCHARGE_COLUMN);
    let feature_idx: Vec<usize> = (2..header.len())
        .filter(|&i| Some(i) != discharge_col)
        .collect();
    let columns = feature_idx.iter().map(|&i| header[i].to_string()).collect();

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty patient_id".into()));
        }
        let label = match record[1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    line,
                    format!("label must be 0 or 1, got `{other}`"),
                ))
            }
        };
        let discharge_date = match discharge_col.map(|i| record[i].trim()) {
            None | Some("") => None,
            Some(s) => Some(
                NaiveDate::parse_from_str(s, "%Y-%m-%d")
                    .map_err(|e| parse_err(line, format!("{DISCHARGE_COLUMN} `{s}`: {e}")))?,
            ),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicatePatient(id));
        }
        let cells = feature_idx
            .iter()
            .map(|&i| {
                let v = record[i].trim();
                (!v.is_empty()).then(|| v.to_string())
            })
            .collect();
        rows.push(StructuredRow {
            patient_id: id,
            label,
            discharge_date,
            cells,
        });
    }
    Ok(StructuredTable { columns, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn read_notes(path: &Path) -> Result<Vec<RawNote>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut notes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let note: RawNote = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if note.patient_id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty patient_id".into(),
            });
        }
        notes.push(note);
    }
    Ok(notes)
}

/// Join a structured table with raw notes.
pub fn build_corpus(table: StructuredTable, notes: Vec<RawNote>, config: &CorpusConfig) -> Corpus {
    let mut by_patient: HashMap<String, Vec<RawNote>> = HashMap::new();
    for note in notes {
        by_patient
            .entry(note.patient_id.clone())
            .or_default()
            .push(note);
    }
    let known: HashSet<&str> = table.rows.iter().map(|r| r.patient_id.as_str()).collect();
    let dropped_note_only = by_patient
        .keys()
        .filter(|id| !known.contains(id.as_str()))
        .count();
    if dropped_note_only > 0 {
        log::warn!("{dropped_note_only} patient(s) have notes but no structured row; dropped");
    }

    let patients = table
        .rows
        .into_iter()
        .map(|row| {
            let notes = by_patient
                .get(&row.patient_id)
                .map_or(&[][..], Vec::as_slice);
            let documents = NoteType::ALL
                .into_iter()
                .filter_map(|t| {
                    let cutoff = config.cutoff.cutoff_for(row.discharge_date, t);
                    merge_patient_notes(notes, &row.patient_id, t, cutoff, &config.stopwords)
                        .map(|doc| (t, doc))
                })
                .collect();
            PatientRecord {
                patient_id: row.patient_id,
                label: row.label,
                structured: row.cells,
                documents,
                discharge_date: row.discharge_date,
            }
        })
        .collect();

    Corpus {
        patients,
        note_types: NoteType::ALL.to_vec(),
        feature_columns: table.columns,
        dropped_note_only,
    }
}

pub fn load_corpus(
    structured_path: &Path,
    notes_path: &Path,
    config: &CorpusConfig,
) -> Result<Corpus> {
    let table = read_structured(structured_path)?;
    let notes = read_notes(notes_path)?;
    Ok(build_corpus(table, notes, config))
}
