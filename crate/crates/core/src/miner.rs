//! Runs input reduction over a sample of the IID corpus and merges the
//! extracted `(trigger, label)` pairs into a deduplicated candidate set.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{ModelAdapter, Tokens};
use crate::corpus::{sample_examples, Corpus, LabeledExample, SplitTag};
use crate::error::{Error, Result};
use crate::reduction::{reduce_many, ExtractionResult};

pub const DEFAULT_SAMPLES: usize = 1000;

/// A trigger token sequence `w` and the label `l` it induces.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InferencePattern {
    pub trigger: Tokens,
    pub label: usize,
}

impl InferencePattern {
    pub fn new(trigger: Tokens, label: usize) -> Result<Self> {
        if trigger.is_empty() {
            return Err(Error::Contract("pattern trigger must be non-empty".into()));
        }
        Ok(InferencePattern { trigger, label })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub extraction_count: usize,
    pub fallback_count: usize,
    pub source_ids: Vec<String>,
}

/// One row of the candidates file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub trigger: Tokens,
    pub label: usize,
    pub extraction_count: usize,
    pub fallback_count: usize,
    pub source_ids: Vec<String>,
}

/// Extracted patterns with merge counts, ordered by `(trigger, label)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidateSet {
    entries: BTreeMap<InferencePattern, Provenance>,
}

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, result: &ExtractionResult) {
        let key = InferencePattern {
            trigger: result.trigger.clone(),
            label: result.label,
        };
        let prov = self.entries.entry(key).or_default();
        prov.extraction_count += 1;
        if result.fallback {
            prov.fallback_count += 1;
        }
        prov.source_ids.push(result.source_id.clone());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&InferencePattern, &Provenance)> {
        self.entries.iter()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &InferencePattern> {
        self.entries.keys()
    }

    pub fn provenance(&self, pattern: &InferencePattern) -> Option<&Provenance> {
        self.entries.get(pattern)
    }

    pub fn total_extractions(&self) -> usize {
        self.entries.values().map(|p| p.extraction_count).sum()
    }

    pub fn to_records(&self) -> Vec<CandidateRecord> {
        self.entries
            .iter()
            .map(|(p, prov)| CandidateRecord {
                trigger: p.trigger.clone(),
                label: p.label,
                extraction_count: prov.extraction_count,
                fallback_count: prov.fallback_count,
                source_ids: prov.source_ids.clone(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<CandidateRecord>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for r in records {
            if r.extraction_count == 0 {
                return Err(Error::Load(format!(
                    "candidate {:?} has zero extractions",
                    r.trigger
                )));
            }
            let key = InferencePattern::new(r.trigger, r.label)
                .map_err(|e| Error::Load(e.to_string()))?;
            let prov = Provenance {
                extraction_count: r.extraction_count,
                fallback_count: r.fallback_count,
                source_ids: r.source_ids,
            };
            if entries.insert(key.clone(), prov).is_some() {
                return Err(Error::Load(format!(
                    "duplicate candidate {:?} -> {}",
                    key.trigger, key.label
                )));
            }
        }
        Ok(CandidateSet { entries })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_records()).expect("records serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<CandidateRecord> = serde_json::from_str(text)?;
        Self::from_records(records)
    }
}

#[derive(Clone, Debug)]
pub struct MineOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub include_fallback: bool,
    pub workers: usize,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            include_fallback: false,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MineOutcome {
    pub candidates: CandidateSet,
    /// Every finished reduction in sample order, fallbacks included.
    pub results: Vec<ExtractionResult>,
    pub sampled_ids: Vec<String>,
    pub failed_ids: Vec<String>,
    pub errors: Vec<String>,
    pub excluded_fallbacks: usize,
}

impl MineOutcome {
    pub fn is_complete(&self) -> bool {
        self.failed_ids.is_empty()
    }
}

pub fn mine(
    corpus: &Corpus,
    adapter: &dyn ModelAdapter,
    options: &MineOptions,
) -> Result<MineOutcome> {
    mine_resuming(corpus, adapter, options, &[])
}

/// Mines, reusing `done` results (matched by source id) instead of reducing
/// those examples again. Examples whose batch hit an adapter error are listed
/// in `failed_ids` and left out of the candidate set.
pub fn mine_resuming(
    corpus: &Corpus,
    adapter: &dyn ModelAdapter,
    options: &MineOptions,
    done: &[ExtractionResult],
) -> Result<MineOutcome> {
    if corpus.split_tag() != SplitTag::Iid {
        return Err(Error::Contract(
            "patterns are mined from the IID corpus".into(),
        ));
    }
    if !corpus.is_tokenized() {
        return Err(Error::Contract(
            "corpus must be tokenized before mining".into(),
        ));
    }
    let sample = sample_examples(corpus, options.n_samples, options.seed)?;
    let mut finished: HashMap<String, ExtractionResult> = done
        .iter()
        .map(|r| (r.source_id.clone(), r.clone()))
        .collect();
    let todo: Vec<&LabeledExample> = sample
        .iter()
        .copied()
        .filter(|e| !finished.contains_key(e.id.as_str()))
        .collect();

    let chunks: Vec<&[&LabeledExample]> = todo.chunks(adapter.batch_size().max(1)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outputs: Vec<Result<Vec<ExtractionResult>>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|chunk| reduce_many(chunk, adapter))
            .collect()
    });

    let mut failed_ids = Vec::new();
    let mut errors = Vec::new();
    for (chunk, out) in chunks.iter().zip(outputs) {
        match out {
            Ok(results) => {
                for r in results {
                    finished.insert(r.source_id.clone(), r);
                }
            }
            Err(e @ Error::Contract(_)) => return Err(e),
            Err(e) => {
                errors.push(e.to_string());
                failed_ids.extend(chunk.iter().map(|e| e.id.clone()));
            }
        }
    }

    let mut candidates = CandidateSet::new();
    let mut results = Vec::new();
    let mut excluded_fallbacks = 0;
    for ex in &sample {
        let Some(r) = finished.get(&ex.id) else {
            continue;
        };
        if r.fallback && !options.include_fallback {
            excluded_fallbacks += 1;
        } else {
            candidates.insert(r);
        }
        results.push(r.clone());
    }
    if !failed_ids.is_empty() {
        log::warn!(
            "{} example(s) failed during mining: {}",
            failed_ids.len(),
            errors.join("; ")
        );
    }
    Ok(MineOutcome {
        candidates,
        results,
        sampled_ids: sample.iter().map(|e| e.id.clone()).collect(),
        failed_ids,
        errors,
        excluded_fallbacks,
    })
}
