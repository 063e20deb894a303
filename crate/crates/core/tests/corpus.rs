use std::fs;
use std::path::Path;

use readmit_core::corpus::{load_corpus, CorpusConfig, NoteType, Stopwords};
use readmit_core::Error;

fn write(dir: &Path, csv: &str, notes: &str) {
    fs::write(dir.join("structured.csv"), csv).unwrap();
    fs::write(dir.join("notes.jsonl"), notes).unwrap();
}

fn load(dir: &Path) -> readmit_core::Result<readmit_core::corpus::Corpus> {
    let cfg = CorpusConfig {
        stopwords: Stopwords::english(),
        ..CorpusConfig::default()
    };
    load_corpus(&dir.join("structured.csv"), &dir.join("notes.jsonl"), &cfg)
}

const CSV: &str = "patient_id,label,discharge_date,age,sex\n\
A,1,2020-03-01,61,M\n\
B,0,,45,F\n\
C,0,2020-05-10,,F\n\
D,1,,70,M\n";

#[test]
fn joins_notes_to_structured_rows() {
    let dir = tempfile::tempdir().unwrap();
    let notes = r#"{"patient_id":"A","note_type":"progress","date":"2020-02-01","text":"Graft is stable."}
{"patient_id":"A","note_type":"progress","date":"2020-01-01","text":"Creatinine rising"}
{"patient_id":"A","note_type":"progress","date":"2020-04-01","text":"after discharge"}
{"patient_id":"B","note_type":"consultations","text":"The patient reports fever"}
{"patient_id":"C","note_type":"selection_conference","date":"2020-05-01","text":"Listed for transplant"}
{"patient_id":"Z","note_type":"progress","text":"orphan note"}
"#;
    write(dir.path(), CSV, notes);
    let corpus = load(dir.path()).unwrap();
    assert_eq!(corpus.ids(), ["A", "B", "C", "D"]);
    assert_eq!(corpus.labels(), [true, false, false, true]);
    assert_eq!(corpus.feature_columns, ["age", "sex"]);
    assert_eq!(corpus.dropped_note_only, 1);
    let with_notes = corpus
        .patients
        .iter()
        .filter(|p| !p.documents.is_empty())
        .count();
    assert_eq!(with_notes, 3);
    // Date order, stopwords removed, the post-discharge note dropped.
    assert_eq!(
        corpus.patients[0].documents[&NoteType::Progress],
        ["creatinine", "rising", "graft", "stable"]
    );
    assert_eq!(
        corpus.patients[1].documents[&NoteType::Consultations],
        ["patient", "reports", "fever"]
    );
    assert_eq!(corpus.patients[2].structured, [None, Some("F".to_string())]);
}

#[test]
fn duplicate_patient_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "patient_id,label,age\nA,1,3\nA,0,4\n", "");
    assert!(matches!(load(dir.path()), Err(Error::DuplicatePatient(..))));
}

#[test]
fn malformed_note_names_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        CSV,
        "{\"patient_id\":\"A\",\"note_type\":\"progress\",\"text\":\"ok\"}\n{not json\n",
    );
    let err = load(dir.path()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("notes.jsonl") && msg.contains(":2"), "{msg}");
}

#[test]
fn bad_label_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "patient_id,label,age\nA,yes,3\n", "");
    assert!(matches!(
        load(dir.path()),
        Err(Error::Parse { line: 2, .. })
    ));
}
