//! Cross-validated c-statistics with fold-level confidence intervals.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::pipeline::{FeaturePipeline, FitRecord, Method, PipelineConfig};
use crate::rng;

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Runs in `O(n log n)`; credit is accumulated in integer half-units so the
/// result is exactly the pairwise count divided by `n_pos * n_neg`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Invalid("scores contain NaN".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("c-statistic needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut half_credit: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        half_credit +=
            2 * u128::from(pos) * u128::from(neg_below) + u128::from(pos) * u128::from(neg);
        neg_below += neg;
        i = j;
    }
    Ok(half_credit as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

/// Normal-approximation 95% interval: mean ± 1.96 · s / √m with the sample
/// standard deviation `s`.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Invalid(format!(
            "confidence interval needs at least 2 values, got {}",
            values.len()
        )));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let half = 1.96 * var.sqrt() / m.sqrt();
    Ok((mean - half, mean + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Test patient ids per fold, in shuffled order.
    pub test_ids: Vec<Vec<String>>,
    #[serde(skip)]
    pub test_rows: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn train_rows(&self, fold: usize, n: usize) -> Vec<usize> {
        let mut is_test = vec![false; n];
        for &i in &self.test_rows[fold] {
            is_test[i] = true;
        }
        (0..n).filter(|&i| !is_test[i]).collect()
    }
}

/// Seeded k-fold partition. Stratified plans shuffle each class separately
/// and deal them round-robin, continuing the deal from positives into
/// negatives so fold sizes differ by at most one.
pub fn kfold_split(
    ids: &[String],
    labels: &[bool],
    k: usize,
    seed: u64,
    stratified: bool,
) -> Result<FoldPlan> {
    if ids.len() != labels.len() {
        return Err(Error::Dimension {
            expected: ids.len(),
            got: labels.len(),
        });
    }
    if k < 2 {
        return Err(Error::Invalid(format!("k must be at least 2, got {k}")));
    }
    if k > ids.len() {
        return Err(Error::Invalid(format!(
            "k = {k} exceeds the {} patients",
            ids.len()
        )));
    }
    let mut rng = rng::rng_from(seed, &[rng::STREAM_SPLIT]);
    let groups: Vec<Vec<usize>> = if stratified {
        let pos = (0..ids.len()).filter(|&i| labels[i]).collect();
        let neg = (0..ids.len()).filter(|&i| !labels[i]).collect();
        vec![pos, neg]
    } else {
        vec![(0..ids.len()).collect()]
    };
    let mut test_rows = vec![Vec::new(); k];
    let mut slot = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            test_rows[slot % k].push(i);
            slot += 1;
        }
    }
    let test_ids = test_rows
        .iter()
        .map(|rows| rows.iter().map(|&i| ids[i].clone()).collect())
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        stratified,
        test_ids,
        test_rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Worker threads for folds; results do not depend on it.
    pub jobs: usize,
    pub pipeline: PipelineConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 5,
            seed: 0,
            stratified: true,
            jobs: 1,
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub fold_cstats: Vec<f64>,
    pub mean: f64,
    pub ci: (f64, f64),
    /// Mean minus the structured-only baseline mean.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// TF-IDF vocabulary size per note type, in note-type order.
    pub tfidf_dims: Vec<usize>,
    pub fit_records: Vec<FitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub plan: FoldPlan,
    pub folds: Vec<FoldSummary>,
    pub methods: Vec<MethodReport>,
}

struct FoldOutcome {
    summary: FoldSummary,
    cstats: Vec<(Method, f64)>,
}

fn run_fold(
    corpus: &Corpus,
    plan: &FoldPlan,
    fold: usize,
    methods: &[Method],
    config: &EvalConfig,
) -> Result<FoldOutcome> {
    let n = corpus.patients.len();
    let train = plan.train_rows(fold, n);
    let test = &plan.test_rows[fold];
    let labels = corpus.labels();
    let y_train: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    let with_notes = methods.iter().any(|m| m.uses_notes());

    let wrap = |method: &str, e: Error| Error::Fold {
        fold,
        method: method.to_string(),
        source: Box::new(e),
    };
    let fitted = FeaturePipeline::fit(
        corpus,
        &train,
        &config.pipeline,
        config.seed,
        fold as u64,
        with_notes,
    )
    .map_err(|e| wrap("vectorizers", e))?;
    let test_sets = fitted
        .pipeline
        .transform(corpus, test)
        .map_err(|e| wrap("vectorizers", e))?;

    let mut cstats = Vec::new();
    for &m in methods {
        let model = m
            .fit(&fitted.train, &y_train, &config.pipeline.logreg)
            .map_err(|e| wrap(m.as_str(), e))?;
        let scores = model
            .predict_datasets(&test_sets)
            .map_err(|e| wrap(m.as_str(), e))?;
        let c = auc(&scores, &y_test).map_err(|e| wrap(m.as_str(), e))?;
        log::info!("fold {fold} {m}: c = {c:.4}");
        cstats.push((m, c));
    }
    Ok(FoldOutcome {
        summary: FoldSummary {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            tfidf_dims: fitted
                .pipeline
                .notes
                .iter()
                .map(|v| v.tfidf.dim())
                .collect(),
            fit_records: fitted.fit_records,
        },
        cstats,
    })
}

/// Run every method on every fold. The structured-only baseline is always
/// evaluated so deltas are defined, but only requested methods are reported.
pub fn cross_validate(
    corpus: &Corpus,
    methods: &[Method],
    config: &EvalConfig,
) -> Result<CvResult> {
    if methods.is_empty() {
        return Err(Error::Invalid("no methods requested".into()));
    }
    let plan = kfold_split(
        &corpus.ids(),
        &corpus.labels(),
        config.k,
        config.seed,
        config.stratified,
    )?;
    let mut to_run: Vec<Method> = methods.to_vec();
    if !to_run.contains(&Method::StructuredOnly) {
        to_run.insert(0, Method::StructuredOnly);
    }

    let outcomes: Vec<Result<FoldOutcome>> = if config.jobs <= 1 {
        (0..plan.k)
            .map(|f| run_fold(corpus, &plan, f, &to_run, config))
            .collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<FoldOutcome>>>> =
            Mutex::new((0..plan.k).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..config.jobs.min(plan.k) {
                s.spawn(|| loop {
                    let f = next.fetch_add(1, Ordering::SeqCst);
                    if f >= plan.k {
                        break;
                    }
                    let r = run_fold(corpus, &plan, f, &to_run, config);
                    slots.lock().expect("fold results lock")[f] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("fold results lock")
            .into_iter()
            .map(|r| r.expect("every fold ran"))
            .collect()
    };
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let per_method = |m: Method| -> Vec<f64> {
        outcomes
            .iter()
            .map(|o| {
                o.cstats
                    .iter()
                    .find(|(mm, _)| *mm == m)
                    .expect("method evaluated")
                    .1
            })
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let baseline = mean(&per_method(Method::StructuredOnly));
    let reports = methods
        .iter()
        .map(|&m| {
            let folds = per_method(m);
            let mu = mean(&folds);
            Ok(MethodReport {
                method: m,
                ci: confidence_interval(&folds)?,
                mean: mu,
                delta: mu - baseline,
                fold_cstats: folds,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CvResult {
        plan,
        folds: outcomes.into_iter().map(|o| o.summary).collect(),
        methods: reports,
    })
}

/// Plain-text table with the columns Method | Avg. c-stats | 95% CI | Delta.
pub fn format_table(reports: &[MethodReport]) -> String {
    let rows: Vec<[String; 4]> = reports
        .iter()
        .map(|r| {
            [
                r.method.as_str().to_string(),
                format!("{:.4}", r.mean),
                format!("({:.4}, {:.4})", r.ci.0, r.ci.1),
                if r.method == Method::StructuredOnly {
                    format!("{:.4}", 0.0)
                } else {
                    format!("{:+.4}", r.delta)
                },
            ]
        })
        .collect();
    render_table(&["Method", "Avg. c-stats", "95% CI", "Delta"], &rows)
}

/// Left-aligned pipe table shared by the text reports.
pub fn render_table<const N: usize>(header: &[&str; N], rows: &[[String; N]]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(
        out,
        "{}",
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-|-")
    );
    for row in rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
    out
}
