//! Generators and straight-line reference implementations shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.
#![allow(dead_code)]

pub mod checks;
pub mod server;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shortcut_core::adapter::ToyLexiconModel;
use shortcut_core::corpus::{tokenize_corpus, Corpus, LabeledExample, SplitTag};

pub const MASK: &str = "[MASK]";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("l{i}")).collect()
}

pub fn vocab(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t{i}")).collect()
}

/// Plain-data linear model the oracles evaluate independently.
#[derive(Clone, Debug)]
pub struct LinearSpec {
    pub bias: Vec<f64>,
    pub weights: HashMap<String, Vec<f64>>,
}

/// Weights are multiples of 0.25 so sums are exact and ties are real.
pub fn random_linear(rng: &mut ChaCha8Rng, n_labels: usize, vocab: &[String]) -> LinearSpec {
    let q = |rng: &mut ChaCha8Rng| rng.gen_range(-8i32..=8) as f64 * 0.25;
    let bias = (0..n_labels).map(|_| q(rng)).collect();
    let mut weights = HashMap::new();
    for t in vocab {
        if rng.gen_bool(0.85) {
            weights.insert(t.clone(), (0..n_labels).map(|_| q(rng)).collect());
        }
    }
    LinearSpec { bias, weights }
}

pub fn to_model(spec: &LinearSpec) -> ToyLexiconModel {
    let mut b = ToyLexiconModel::builder(labels(spec.bias.len()))
        .bias(spec.bias.clone())
        .mask_token(MASK)
        .batch_size(4);
    for (t, w) in &spec.weights {
        b = b.weight(t.clone(), w.clone());
    }
    b.build().unwrap()
}

fn oracle_label(spec: &LinearSpec, tokens: &[String]) -> usize {
    let mut s = spec.bias.clone();
    for t in tokens {
        if t == MASK {
            continue;
        }
        if let Some(w) = spec.weights.get(t) {
            for c in 0..s.len() {
                s[c] += w[c];
            }
        }
    }
    let mut best = 0;
    for c in 1..s.len() {
        if s[c] > s[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, PartialEq)]
pub struct OracleReduction {
    pub trigger: Vec<String>,
    pub label: usize,
    pub steps: usize,
    pub fallback: bool,
}

/// Rebuilds each masked state from scratch and re-predicts it.
pub fn oracle_reduce(spec: &LinearSpec, tokens: &[String]) -> OracleReduction {
    let n = tokens.len();
    let label = oracle_label(spec, tokens);
    let attr = |i: usize| spec.weights.get(&tokens[i]).map_or(0.0, |w| w[label]);
    // selection sort on (attribution, position): deliberately naive
    let mut order = Vec::new();
    let mut used = vec![false; n];
    for _ in 0..n {
        let mut pick = None;
        for (i, &taken) in used.iter().enumerate() {
            if taken {
                continue;
            }
            match pick {
                None => pick = Some(i),
                Some(p) if attr(i) < attr(p) => pick = Some(i),
                _ => {}
            }
        }
        used[pick.unwrap()] = true;
        order.push(pick.unwrap());
    }
    for k in 1..=n {
        let masked: Vec<usize> = order[..k].to_vec();
        let state: Vec<String> = (0..n)
            .map(|i| {
                if masked.contains(&i) {
                    MASK.to_string()
                } else {
                    tokens[i].clone()
                }
            })
            .collect();
        if oracle_label(spec, &state) != label {
            let pre_flip: Vec<String> = (0..n)
                .filter(|i| !order[..k - 1].contains(i))
                .map(|i| tokens[i].clone())
                .collect();
            return OracleReduction {
                trigger: pre_flip,
                label,
                steps: k,
                fallback: false,
            };
        }
    }
    OracleReduction {
        trigger: vec![tokens[order[n - 1]].clone()],
        label,
        steps: n,
        fallback: true,
    }
}

pub fn random_tokens(
    rng: &mut ChaCha8Rng,
    vocab: &[String],
    min: usize,
    max: usize,
) -> Vec<String> {
    let len = rng.gen_range(min..=max);
    (0..len)
        .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
        .collect()
}

/// Tokenized corpus from token lists and gold labels.
pub fn corpus_from(
    docs: &[Vec<String>],
    golds: &[usize],
    n_labels: usize,
    tag: SplitTag,
) -> Corpus {
    let examples = docs
        .iter()
        .zip(golds)
        .enumerate()
        .map(|(i, (d, &g))| LabeledExample {
            id: format!("{tag}-{i}"),
            text: d.join(" "),
            tokens: Vec::new(),
            gold_label: g,
        })
        .collect();
    let raw = Corpus::new(examples, labels(n_labels), tag, "test").unwrap();
    let tok = ToyLexiconModel::builder(labels(n_labels)).build().unwrap();
    tokenize_corpus(&raw, &tok).unwrap().0
}

/// Ordered subsequence with gaps, by recursion.
pub fn oracle_contains(tokens: &[String], trigger: &[String]) -> bool {
    match (trigger.first(), tokens.first()) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(t), Some(x)) => {
            if t == x {
                oracle_contains(&tokens[1..], &trigger[1..])
            } else {
                oracle_contains(&tokens[1..], trigger)
            }
        }
    }
}

pub fn oracle_contains_contiguous(tokens: &[String], trigger: &[String]) -> bool {
    if trigger.len() > tokens.len() {
        return false;
    }
    (0..=tokens.len() - trigger.len()).any(|s| tokens[s..s + trigger.len()] == *trigger)
}

/// Straight-line macro-F1 in points over classes that occur in gold or prediction.
pub fn oracle_macro_f1(pred: &[usize], gold: &[usize], n_labels: usize) -> f64 {
    let mut total = 0.0;
    let mut classes = 0.0;
    for c in 0..n_labels {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for i in 0..pred.len() {
            if pred[i] == c && gold[i] == c {
                tp += 1.0;
            } else if pred[i] == c {
                fp += 1.0;
            } else if gold[i] == c {
                fneg += 1.0;
            }
        }
        if tp + fp + fneg == 0.0 {
            continue;
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 {
            tp / (tp + fneg)
        } else {
            0.0
        };
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += f;
        classes += 1.0;
    }
    100.0 * total / classes
}

pub struct OracleStats {
    pub g: Option<f64>,
    pub iid_acc: Option<f64>,
    pub delta: Option<f64>,
    pub support_iid: usize,
    pub support_ood: usize,
}

pub struct Split<'a> {
    pub docs: &'a [Vec<String>],
    pub golds: &'a [usize],
    pub preds: &'a [usize],
}

pub fn oracle_stats(
    trigger: &[String],
    label: usize,
    iid: &Split,
    ood: &Split,
    n_labels: usize,
) -> OracleStats {
    let iid_hits: Vec<usize> = (0..iid.docs.len())
        .filter(|&i| oracle_contains(&iid.docs[i], trigger))
        .collect();
    let ood_hits: Vec<usize> = (0..ood.docs.len())
        .filter(|&i| oracle_contains(&ood.docs[i], trigger))
        .collect();
    let g = (!ood_hits.is_empty()).then(|| {
        let n = ood_hits.iter().filter(|&&i| ood.preds[i] == label).count();
        100.0 * n as f64 / ood_hits.len() as f64
    });
    let pred_l: Vec<usize> = iid_hits
        .iter()
        .copied()
        .filter(|&i| iid.preds[i] == label)
        .collect();
    let iid_acc = (!pred_l.is_empty()).then(|| {
        let right = pred_l.iter().filter(|&&i| iid.golds[i] == label).count();
        100.0 * right as f64 / pred_l.len() as f64
    });
    let delta = (!ood_hits.is_empty()).then(|| {
        let p: Vec<usize> = ood_hits.iter().map(|&i| ood.preds[i]).collect();
        let y: Vec<usize> = ood_hits.iter().map(|&i| ood.golds[i]).collect();
        oracle_macro_f1(&p, &y, n_labels) - oracle_macro_f1(ood.preds, ood.golds, n_labels)
    });
    OracleStats {
        g,
        iid_acc,
        delta,
        support_iid: iid_hits.len(),
        support_ood: ood_hits.len(),
    }
}
