//! Synthetic IID/OOD corpus pairs with planted shortcut triggers, a toy model
//! constructed to exploit them, and scoring of a report against the plants.
//!
//! Construction (all weights are toward a single label):
//!
//! * the default label gets bias `b`; everything else has zero bias;
//! * a genuine token of label `c` weighs `w_g > b` toward `c`;
//! * each token of a `k`-token planted trigger weighs `b / (k - 0.5)`, so the
//!   whole trigger beats the bias but any `k - 1` of its tokens do not;
//! * filler tokens weigh nothing.
//!
//! In the IID corpus a trigger co-occurs with its planted label at
//! `iid_plant_rate`; in the OOD corpus trigger-bearing examples draw their
//! label from `ood_label_dist` and never carry a genuine token, so genuine
//! tokens keep the same label association in both corpora.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::ToyLexiconModel;
use crate::corpus::{Corpus, LabeledExample, SplitTag};
use crate::error::{Error, Result};
use crate::identify::ShortcutReport;
use crate::matchindex::contains_trigger;

pub const MIN_CORPUS_SIZE: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub trigger: Vec<String>,
    pub planted_label: usize,
    /// Probability that an IID trigger-bearing example has `planted_label`.
    pub iid_plant_rate: f64,
    /// Label distribution of OOD trigger-bearing examples; empty means uniform.
    #[serde(default)]
    pub ood_label_dist: Vec<f64>,
    /// Fraction of IID examples carrying the trigger.
    #[serde(default = "default_presence")]
    pub iid_presence: f64,
    /// Fraction of OOD examples carrying the trigger.
    #[serde(default = "default_presence")]
    pub ood_presence: f64,
}

fn default_presence() -> f64 {
    0.15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSpec {
    pub label_names: Vec<String>,
    /// Label predicted when no informative token is present.
    pub default_label: usize,
    /// Genuine tokens per label, indexed like `label_names`.
    pub genuine_tokens: Vec<Vec<String>>,
    /// Probability that a non-trigger example carries a genuine token of its gold label.
    pub genuine_rate: f64,
    pub n_iid: usize,
    pub n_ood: usize,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub bias_weight: f64,
    pub genuine_weight: f64,
    pub seed: u64,
    pub plants: Vec<PlantSpec>,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            label_names: vec!["negative".into(), "neutral".into(), "positive".into()],
            default_label: 1,
            genuine_tokens: vec![
                vec!["awful".into(), "terrible".into()],
                vec!["okay".into()],
                vec!["great".into(), "lovely".into()],
            ],
            genuine_rate: 0.6,
            n_iid: 2000,
            n_ood: 2000,
            vocab_size: 400,
            min_len: 4,
            max_len: 12,
            bias_weight: 0.5,
            genuine_weight: 0.8,
            seed: 0,
            plants: vec![
                PlantSpec {
                    trigger: vec!["spielberg".into()],
                    planted_label: 2,
                    iid_plant_rate: 0.95,
                    ood_label_dist: Vec::new(),
                    iid_presence: 0.15,
                    ood_presence: 0.15,
                },
                PlantSpec {
                    trigger: vec!["never".into(), "again".into()],
                    planted_label: 0,
                    iid_plant_rate: 0.9,
                    ood_label_dist: Vec::new(),
                    iid_presence: 0.15,
                    ood_presence: 0.15,
                },
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedPattern {
    pub trigger: Vec<String>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: Vec<PlantedPattern>,
    pub genuine_tokens: Vec<String>,
}

pub struct Benchmark {
    pub iid: Corpus,
    pub ood: Corpus,
    pub model: ToyLexiconModel,
    pub truth: GroundTruth,
}

impl Benchmark {
    /// Writes `iid.jsonl`, `ood.jsonl`, `model.json` and `truth.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.iid.write_jsonl(dir.join("iid.jsonl"))?;
        self.ood.write_jsonl(dir.join("ood.jsonl"))?;
        let model = serde_json::to_string_pretty(&self.model.to_spec())?;
        let path = dir.join("model.json");
        fs::write(&path, model).map_err(|e| Error::io(&path, e))?;
        let truth = serde_json::to_string_pretty(&self.truth)?;
        let path = dir.join("truth.json");
        fs::write(&path, truth).map_err(|e| Error::io(&path, e))
    }
}

fn filler(i: usize) -> String {
    format!("w{i:04}")
}

impl BenchSpec {
    fn ood_dist(&self, plant: &PlantSpec) -> Vec<f64> {
        if plant.ood_label_dist.is_empty() {
            vec![1.0 / self.label_names.len() as f64; self.label_names.len()]
        } else {
            plant.ood_label_dist.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.label_names.len();
        let cfg = |m: String| Err(Error::Config(m));
        if n < 2 {
            return cfg("benchmark needs at least two labels".into());
        }
        if self.default_label >= n {
            return cfg(format!("default label {} out of range", self.default_label));
        }
        if self.n_iid < MIN_CORPUS_SIZE || self.n_ood < MIN_CORPUS_SIZE {
            return cfg(format!("corpus sizes must be at least {MIN_CORPUS_SIZE}"));
        }
        if self.vocab_size == 0 || self.min_len == 0 || self.min_len > self.max_len {
            return cfg("need vocab_size > 0 and 0 < min_len <= max_len".into());
        }
        if !(self.genuine_rate >= 0.0 && self.genuine_rate <= 1.0) {
            return cfg("genuine_rate must be in [0, 1]".into());
        }
        if !(self.bias_weight > 0.0 && self.genuine_weight > self.bias_weight) {
            return cfg("need 0 < bias_weight < genuine_weight".into());
        }
        if self.genuine_tokens.len() != n {
            return cfg(format!("genuine_tokens must list {n} label groups"));
        }
        let fillers: HashSet<String> = (0..self.vocab_size).map(filler).collect();
        let mut seen: HashSet<&str> = HashSet::new();
        for tok in self.genuine_tokens.iter().flatten() {
            if fillers.contains(tok) || !seen.insert(tok) {
                return cfg(format!("genuine token '{tok}' is reused"));
            }
        }
        let (mut iid_total, mut ood_total) = (0.0, 0.0);
        for p in &self.plants {
            if p.trigger.is_empty() {
                return cfg("planted trigger is empty".into());
            }
            for tok in &p.trigger {
                if tok.is_empty() || tok.contains(char::is_whitespace) {
                    return cfg(format!("bad trigger token '{tok}'"));
                }
                if fillers.contains(tok) || !seen.insert(tok) {
                    return cfg(format!(
                        "trigger token '{tok}' collides with another trigger, genuine or filler token"
                    ));
                }
            }
            if p.planted_label >= n {
                return cfg(format!("planted label {} out of range", p.planted_label));
            }
            if p.planted_label == self.default_label {
                return cfg(
                    "a plant cannot target the default label; masking could never flip it".into(),
                );
            }
            if !(p.iid_plant_rate > 0.5 && p.iid_plant_rate <= 1.0) {
                return cfg(format!(
                    "iid_plant_rate {} not in (0.5, 1]",
                    p.iid_plant_rate
                ));
            }
            let dist = self.ood_dist(p);
            if dist.len() != n
                || dist.iter().any(|v| v.is_nan() || *v < 0.0)
                || (dist.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return cfg("ood_label_dist must be a distribution over the labels".into());
            }
            for v in [p.iid_presence, p.ood_presence] {
                if !(0.0..=1.0).contains(&v) {
                    return cfg("presence rates must be in [0, 1]".into());
                }
            }
            iid_total += p.iid_presence;
            ood_total += p.ood_presence;
        }
        if iid_total > 1.0 + 1e-12 || ood_total > 1.0 + 1e-12 {
            return cfg("plant presence rates add up to more than 1".into());
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<ToyLexiconModel> {
        let n = self.label_names.len();
        let mut bias = vec![0.0; n];
        bias[self.default_label] = self.bias_weight;
        let mut b = ToyLexiconModel::builder(self.label_names.clone())
            .name(format!("synthbench-{}", self.seed))
            .bias(bias);
        for (label, toks) in self.genuine_tokens.iter().enumerate() {
            for t in toks {
                let mut w = vec![0.0; n];
                w[label] = self.genuine_weight;
                b = b.weight(t.clone(), w);
            }
        }
        for p in &self.plants {
            let per_token = self.bias_weight / (p.trigger.len() as f64 - 0.5);
            for t in &p.trigger {
                let mut w = vec![0.0; n];
                w[p.planted_label] = per_token;
                b = b.weight(t.clone(), w);
            }
        }
        b.build()
    }

    fn pick_plant(&self, rng: &mut ChaCha8Rng, split: SplitTag) -> Option<&PlantSpec> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for p in &self.plants {
            acc += match split {
                SplitTag::Iid => p.iid_presence,
                SplitTag::Ood => p.ood_presence,
            };
            if u < acc {
                return Some(p);
            }
        }
        None
    }

    fn gold_for(&self, rng: &mut ChaCha8Rng, plant: Option<&PlantSpec>, split: SplitTag) -> usize {
        let n = self.label_names.len();
        match (plant, split) {
            (None, _) => rng.gen_range(0..n),
            (Some(p), SplitTag::Iid) => {
                if rng.gen::<f64>() < p.iid_plant_rate {
                    p.planted_label
                } else {
                    let other = rng.gen_range(0..n - 1);
                    if other >= p.planted_label {
                        other + 1
                    } else {
                        other
                    }
                }
            }
            (Some(p), SplitTag::Ood) => WeightedIndex::new(self.ood_dist(p))
                .expect("validated distribution")
                .sample(rng),
        }
    }

    fn example(&self, rng: &mut ChaCha8Rng, split: SplitTag, id: usize) -> LabeledExample {
        let plant = self.pick_plant(rng, split);
        let gold = self.gold_for(rng, plant, split);
        let genuine_allowed = plant.is_none() || split == SplitTag::Iid;
        let genuine = (genuine_allowed
            && !self.genuine_tokens[gold].is_empty()
            && rng.gen::<f64>() < self.genuine_rate)
            .then(|| {
                self.genuine_tokens[gold]
                    .choose(rng)
                    .expect("non-empty")
                    .clone()
            });

        let mut special: Vec<String> = plant.map(|p| p.trigger.clone()).unwrap_or_default();
        let filler_len = rng.gen_range(self.min_len..=self.max_len);
        let total = filler_len + special.len() + genuine.is_some() as usize;
        let mut slots: Vec<usize> = index::sample(rng, total, special.len()).into_vec();
        slots.sort_unstable();
        let mut tokens: Vec<Option<String>> = vec![None; total];
        for (slot, tok) in slots.into_iter().zip(special.drain(..)) {
            tokens[slot] = Some(tok);
        }
        if let Some(g) = genuine {
            let free: Vec<usize> = (0..total).filter(|&i| tokens[i].is_none()).collect();
            tokens[*free.choose(rng).expect("free slot")] = Some(g);
        }
        let tokens: Vec<String> = tokens
            .into_iter()
            .map(|t| t.unwrap_or_else(|| filler(rng.gen_range(0..self.vocab_size))))
            .collect();
        LabeledExample {
            id: format!("{}-{id:05}", split.to_string().to_lowercase()),
            text: tokens.join(" "),
            tokens: Vec::new(),
            gold_label: gold,
        }
    }

    fn corpus(&self, split: SplitTag, n: usize, stream: u64) -> Result<Corpus> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let examples = (0..n).map(|i| self.example(&mut rng, split, i)).collect();
        Corpus::new(
            examples,
            self.label_names.clone(),
            split,
            format!("synthbench:seed={}:{split}", self.seed),
        )
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            planted: self
                .plants
                .iter()
                .map(|p| PlantedPattern {
                    trigger: p.trigger.clone(),
                    label: p.planted_label,
                })
                .collect(),
            genuine_tokens: self.genuine_tokens.iter().flatten().cloned().collect(),
        }
    }
}

/// Generates the corpus pair, the constructed model and the ground truth.
pub fn generate(spec: &BenchSpec) -> Result<Benchmark> {
    spec.validate()?;
    Ok(Benchmark {
        iid: spec.corpus(SplitTag::Iid, spec.n_iid, 1)?,
        ood: spec.corpus(SplitTag::Ood, spec.n_ood, 2)?,
        model: spec.build_model()?,
        truth: spec.ground_truth(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantOutcome {
    pub trigger: Vec<String>,
    pub label: usize,
    pub recalled: bool,
    /// Reported triggers that matched this plant.
    pub matched_by: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    /// 1.0 when nothing was reported; see `precision_defined`.
    pub precision: f64,
    pub precision_defined: bool,
    /// `None` when there are no plants.
    pub recall: Option<f64>,
    pub reported: usize,
    pub matched_reported: usize,
    /// Reported triggers that contain a genuine token.
    pub genuine_reported: Vec<Vec<String>>,
    pub per_plant: Vec<PlantOutcome>,
}

fn matches_plant(trigger: &[String], label: usize, plant: &PlantedPattern) -> bool {
    label == plant.label && contains_trigger(trigger, &plant.trigger)
}

pub fn evaluate_detection(report: &ShortcutReport, truth: &GroundTruth) -> DetectionScore {
    let per_plant: Vec<PlantOutcome> = truth
        .planted
        .iter()
        .map(|plant| {
            let matched_by: Vec<Vec<String>> = report
                .shortcuts
                .iter()
                .filter(|s| matches_plant(&s.trigger, s.label, plant))
                .map(|s| s.trigger.clone())
                .collect();
            PlantOutcome {
                trigger: plant.trigger.clone(),
                label: plant.label,
                recalled: !matched_by.is_empty(),
                matched_by,
            }
        })
        .collect();
    let matched_reported = report
        .shortcuts
        .iter()
        .filter(|s| {
            truth
                .planted
                .iter()
                .any(|p| matches_plant(&s.trigger, s.label, p))
        })
        .count();
    let reported = report.shortcuts.len();
    let genuine: HashSet<&str> = truth.genuine_tokens.iter().map(String::as_str).collect();
    let genuine_reported = report
        .shortcuts
        .iter()
        .filter(|s| s.trigger.iter().any(|t| genuine.contains(t.as_str())))
        .map(|s| s.trigger.clone())
        .collect();
    let recalled = per_plant.iter().filter(|p| p.recalled).count();
    DetectionScore {
        precision: if reported == 0 {
            1.0
        } else {
            matched_reported as f64 / reported as f64
        },
        precision_defined: reported > 0,
        recall: (!truth.planted.is_empty()).then(|| recalled as f64 / truth.planted.len() as f64),
        reported,
        matched_reported,
        genuine_reported,
        per_plant,
    }
}
