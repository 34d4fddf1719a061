//! Pattern statistics, all in percentage points:
//!
//! * generality `g`: share of trigger-bearing OOD examples predicted as the pattern label;
//! * `iid_acc`: among trigger-bearing IID examples predicted as the label, the share whose
//!   gold label is that label;
//! * `delta`: F1 on the trigger-bearing OOD examples minus F1 on the whole OOD corpus.
//!
//! Predictions are always on full, unmasked inputs and are computed once per
//! corpus into a [`PredictionCache`].

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{self, ModelAdapter, Tokens};
use crate::corpus::{Corpus, SplitTag};
use crate::error::{Error, Result};
use crate::matchindex::{build_index, MatchMode, MatchSet, TriggerIndex};
use crate::miner::{CandidateSet, InferencePattern};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Variant {
    #[default]
    Macro,
    Micro,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    NoOodMatches,
    NoIidMatches,
    /// No IID match is predicted as the pattern label.
    DenominatorZero,
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UndefinedReason::NoOodMatches => "no OOD matches",
            UndefinedReason::NoIidMatches => "no IID matches",
            UndefinedReason::DenominatorZero => "denominator zero",
        })
    }
}

fn check_pairs(predictions: &[usize], golds: &[usize], label_count: usize) -> Result<()> {
    if predictions.len() != golds.len() {
        return Err(Error::Contract(format!(
            "{} predictions vs {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Contract("F1 over an empty set".into()));
    }
    if predictions.iter().chain(golds).any(|&l| l >= label_count) {
        return Err(Error::Contract(format!("label outside 0..{label_count}")));
    }
    Ok(())
}

/// Macro-averaged F1 ×100. Classes absent from both predictions and golds are
/// left out of the average; present classes with no true positive count as 0.
pub fn macro_f1(predictions: &[usize], golds: &[usize], label_count: usize) -> Result<f64> {
    check_pairs(predictions, golds, label_count)?;
    let mut tp = vec![0usize; label_count];
    let mut fp = vec![0usize; label_count];
    let mut fn_ = vec![0usize; label_count];
    for (&p, &g) in predictions.iter().zip(golds) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let mut sum = 0.0;
    let mut classes = 0usize;
    for c in 0..label_count {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom == 0 {
            continue;
        }
        sum += 2.0 * tp[c] as f64 / denom as f64;
        classes += 1;
    }
    Ok(100.0 * sum / classes as f64)
}

/// Micro-averaged F1 ×100; for single-label classification this is accuracy.
pub fn micro_f1(predictions: &[usize], golds: &[usize], label_count: usize) -> Result<f64> {
    check_pairs(predictions, golds, label_count)?;
    let correct = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p == g)
        .count();
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

pub fn f1(
    predictions: &[usize],
    golds: &[usize],
    label_count: usize,
    variant: F1Variant,
) -> Result<f64> {
    match variant {
        F1Variant::Macro => macro_f1(predictions, golds, label_count),
        F1Variant::Micro => micro_f1(predictions, golds, label_count),
    }
}

/// Full-input predicted label of every example in a corpus, by corpus position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictionCache {
    labels: Vec<usize>,
}

impl PredictionCache {
    pub fn from_labels(labels: Vec<usize>) -> Self {
        PredictionCache { labels }
    }

    /// Predicts the whole corpus in adapter-sized batches across `workers` threads.
    pub fn build(corpus: &Corpus, adapter: &dyn ModelAdapter, workers: usize) -> Result<Self> {
        if !corpus.is_empty() && !corpus.is_tokenized() {
            return Err(Error::Contract(
                "corpus must be tokenized before prediction".into(),
            ));
        }
        let inputs: Vec<Tokens> = corpus.examples().iter().map(|e| e.tokens.clone()).collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let chunks: Vec<Result<Vec<usize>>> = pool.install(|| {
            inputs
                .par_chunks(adapter.batch_size().max(1))
                .map(|chunk| {
                    adapter::predict_batch(adapter, chunk)
                        .map(|ps| ps.into_iter().map(|p| p.label).collect())
                })
                .collect()
        });
        let mut labels = Vec::with_capacity(inputs.len());
        for c in chunks {
            labels.extend(c?);
        }
        Ok(PredictionCache { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }
}

/// Generality `g`: share (×100) of the OOD matches predicted as the pattern label.
pub fn generality(
    pattern: &InferencePattern,
    ood_matches: &MatchSet,
    ood_predictions: &PredictionCache,
) -> std::result::Result<f64, UndefinedReason> {
    if ood_matches.is_empty() {
        return Err(UndefinedReason::NoOodMatches);
    }
    let hits = ood_matches
        .indices
        .iter()
        .filter(|&&i| ood_predictions.label(i) == pattern.label)
        .count();
    Ok(100.0 * hits as f64 / ood_matches.len() as f64)
}

/// Count of IID matches predicted as the pattern label, the denominator of `iid_acc`.
pub fn predicted_as_label(
    pattern: &InferencePattern,
    iid_matches: &MatchSet,
    iid_predictions: &PredictionCache,
) -> usize {
    iid_matches
        .indices
        .iter()
        .filter(|&&i| iid_predictions.label(i) == pattern.label)
        .count()
}

/// `iid_acc`: among IID matches with f(x) = l, the share (×100) with gold y = l.
pub fn iid_accuracy(
    pattern: &InferencePattern,
    iid_matches: &MatchSet,
    iid_predictions: &PredictionCache,
    iid_corpus: &Corpus,
) -> std::result::Result<f64, UndefinedReason> {
    if iid_matches.is_empty() {
        return Err(UndefinedReason::NoIidMatches);
    }
    let examples = iid_corpus.examples();
    let mut predicted = 0usize;
    let mut correct = 0usize;
    for &i in &iid_matches.indices {
        if iid_predictions.label(i) == pattern.label {
            predicted += 1;
            if examples[i].gold_label == pattern.label {
                correct += 1;
            }
        }
    }
    if predicted == 0 {
        return Err(UndefinedReason::DenominatorZero);
    }
    Ok(100.0 * correct as f64 / predicted as f64)
}

/// `Δ`: F1 over the OOD matches minus `baseline_f1` (the whole-corpus F1), in points.
pub fn delta_f1(
    ood_matches: &MatchSet,
    ood_corpus: &Corpus,
    ood_predictions: &PredictionCache,
    baseline_f1: f64,
    variant: F1Variant,
) -> std::result::Result<f64, UndefinedReason> {
    if ood_matches.is_empty() {
        return Err(UndefinedReason::NoOodMatches);
    }
    let examples = ood_corpus.examples();
    let preds: Vec<usize> = ood_matches
        .indices
        .iter()
        .map(|&i| ood_predictions.label(i))
        .collect();
    let golds: Vec<usize> = ood_matches
        .indices
        .iter()
        .map(|&i| examples[i].gold_label)
        .collect();
    let subset = f1(&preds, &golds, ood_corpus.label_count(), variant)
        .expect("match indices come from the corpus");
    Ok(subset - baseline_f1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndefinedStat {
    pub stat: String,
    pub reason: UndefinedReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternStats {
    pub pattern: InferencePattern,
    pub g: Option<f64>,
    pub iid_acc: Option<f64>,
    pub delta: Option<f64>,
    pub support_iid: usize,
    pub support_ood: usize,
    pub n_pred_l_iid: usize,
    pub undefined: Vec<UndefinedStat>,
}

impl PatternStats {
    pub fn is_fully_defined(&self) -> bool {
        self.g.is_some() && self.iid_acc.is_some() && self.delta.is_some()
    }
}

/// Everything needed to score patterns: both corpora, their indexes, full-input
/// predictions and the OOD baseline F1.
pub struct Scorer<'a> {
    iid: &'a Corpus,
    ood: &'a Corpus,
    iid_index: TriggerIndex,
    ood_index: TriggerIndex,
    iid_predictions: PredictionCache,
    ood_predictions: PredictionCache,
    baseline_f1: f64,
    variant: F1Variant,
    mode: MatchMode,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ScoreOptions {
    pub variant: F1Variant,
    pub mode: MatchMode,
    pub workers: usize,
}

impl<'a> Scorer<'a> {
    pub fn new(
        iid: &'a Corpus,
        ood: &'a Corpus,
        adapter: &dyn ModelAdapter,
        options: ScoreOptions,
    ) -> Result<Self> {
        let iid_predictions = PredictionCache::build(iid, adapter, options.workers)?;
        let ood_predictions = PredictionCache::build(ood, adapter, options.workers)?;
        Self::with_predictions(iid, ood, iid_predictions, ood_predictions, options)
    }

    pub fn with_predictions(
        iid: &'a Corpus,
        ood: &'a Corpus,
        iid_predictions: PredictionCache,
        ood_predictions: PredictionCache,
        options: ScoreOptions,
    ) -> Result<Self> {
        if iid.split_tag() != SplitTag::Iid || ood.split_tag() != SplitTag::Ood {
            return Err(Error::Contract(
                "scorer needs an IID and an OOD corpus".into(),
            ));
        }
        if iid.label_names() != ood.label_names() {
            return Err(Error::Contract("IID and OOD label sets differ".into()));
        }
        if ood.is_empty() {
            return Err(Error::Contract("OOD corpus is empty".into()));
        }
        if iid_predictions.labels().len() != iid.len()
            || ood_predictions.labels().len() != ood.len()
        {
            return Err(Error::Contract(
                "prediction cache does not cover its corpus".into(),
            ));
        }
        let baseline_f1 = f1(
            ood_predictions.labels(),
            &ood.golds(),
            ood.label_count(),
            options.variant,
        )?;
        Ok(Scorer {
            iid,
            ood,
            iid_index: build_index(iid)?,
            ood_index: build_index(ood)?,
            iid_predictions,
            ood_predictions,
            baseline_f1,
            variant: options.variant,
            mode: options.mode,
        })
    }

    pub fn baseline_f1(&self) -> f64 {
        self.baseline_f1
    }

    pub fn iid_predictions(&self) -> &PredictionCache {
        &self.iid_predictions
    }

    pub fn ood_predictions(&self) -> &PredictionCache {
        &self.ood_predictions
    }

    pub fn iid_matches(&self, trigger: &[String]) -> Result<MatchSet> {
        self.iid_index.find_matches(trigger, self.mode)
    }

    pub fn ood_matches(&self, trigger: &[String]) -> Result<MatchSet> {
        self.ood_index.find_matches(trigger, self.mode)
    }

    pub fn score(&self, pattern: &InferencePattern) -> Result<PatternStats> {
        let iid_m = self.iid_matches(&pattern.trigger)?;
        let ood_m = self.ood_matches(&pattern.trigger)?;
        let mut undefined = Vec::new();
        let mut keep = |stat: &str, r: std::result::Result<f64, UndefinedReason>| match r {
            Ok(v) => Some(v),
            Err(reason) => {
                undefined.push(UndefinedStat {
                    stat: stat.to_owned(),
                    reason,
                });
                None
            }
        };
        let g = keep("g", generality(pattern, &ood_m, &self.ood_predictions));
        let iid_acc = keep(
            "iid_acc",
            iid_accuracy(pattern, &iid_m, &self.iid_predictions, self.iid),
        );
        let delta = keep(
            "delta",
            delta_f1(
                &ood_m,
                self.ood,
                &self.ood_predictions,
                self.baseline_f1,
                self.variant,
            ),
        );
        Ok(PatternStats {
            pattern: pattern.clone(),
            g,
            iid_acc,
            delta,
            support_iid: iid_m.len(),
            support_ood: ood_m.len(),
            n_pred_l_iid: predicted_as_label(pattern, &iid_m, &self.iid_predictions),
            undefined,
        })
    }

    /// Scores every candidate in candidate order.
    pub fn score_all(
        &self,
        candidates: &CandidateSet,
        workers: usize,
    ) -> Result<Vec<PatternStats>> {
        let patterns: Vec<&InferencePattern> = candidates.patterns().collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| patterns.par_iter().map(|p| self.score(p)).collect())
    }
}
