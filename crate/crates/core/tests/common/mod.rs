use readmit_core::corpus::{load_corpus, Corpus, CorpusConfig, Stopwords};
use readmit_core::synth::{generate, SynthConfig};

/// Generate a synthetic dataset on disk and load it back.
pub fn synth_corpus(config: &SynthConfig) -> Corpus {
    let out = generate(config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("structured.csv");
    let n = dir.path().join("notes.jsonl");
    std::fs::write(&s, out.structured_csv).unwrap();
    std::fs::write(&n, out.notes_jsonl).unwrap();
    let cfg = CorpusConfig {
        stopwords: Stopwords::english(),
        ..CorpusConfig::default()
    };
    load_corpus(&s, &n, &cfg).unwrap()
}
