//! Input reduction: mask tokens in ascending attribution order until the
//! predicted label flips, then keep what was left just before the flip.
//!
//! Attributions are computed once on the full input and fix the masking
//! order for the whole reduction. Masking replaces a token with the adapter's
//! mask token in place, so sequence length never changes.
//!
//! When masking every token never flips the prediction, the highest-attribution
//! token (the last one masked) is emitted alone and the result is flagged
//! `fallback`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::adapter::{self, AttributionVector, ModelAdapter, Tokens};
use crate::corpus::LabeledExample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub source_id: String,
    /// Unmasked tokens of the last pre-flip state, in original order.
    pub trigger: Tokens,
    /// Prediction on the full input, which is also the last pre-flip prediction.
    pub label: usize,
    pub steps: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub masked_position: usize,
    pub remaining_tokens: Tokens,
    pub prediction: usize,
}

/// Token positions by ascending attribution, ties by ascending position.
pub fn mask_order(attributions: &AttributionVector) -> Vec<usize> {
    let scores = attributions.scores();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// One in-progress reduction. Drives the fixed-order masking loop without
/// touching the adapter, so single and lockstep-batched reductions share it.
struct Reducer<'a> {
    example: &'a LabeledExample,
    mask_token: &'a str,
    label: usize,
    order: Vec<usize>,
    state: Tokens,
    steps: usize,
    trace: Option<Vec<TraceStep>>,
    result: Option<ExtractionResult>,
}

impl<'a> Reducer<'a> {
    fn new(
        example: &'a LabeledExample,
        mask_token: &'a str,
        label: usize,
        attributions: &AttributionVector,
        traced: bool,
    ) -> Self {
        Reducer {
            example,
            mask_token,
            label,
            order: mask_order(attributions),
            state: example.tokens.clone(),
            steps: 0,
            trace: traced.then(Vec::new),
            result: None,
        }
    }

    /// Masks the next position and returns the state to predict.
    fn advance(&mut self) -> &Tokens {
        let pos = self.order[self.steps];
        self.state[pos] = self.mask_token.to_owned();
        self.steps += 1;
        &self.state
    }

    fn observe(&mut self, prediction: usize) {
        let step = self.steps;
        if let Some(trace) = self.trace.as_mut() {
            let mut remaining: Vec<usize> = self.order[step..].to_vec();
            remaining.sort_unstable();
            trace.push(TraceStep {
                step,
                masked_position: self.order[step - 1],
                remaining_tokens: remaining
                    .into_iter()
                    .map(|p| self.example.tokens[p].clone())
                    .collect(),
                prediction,
            });
        }
        if prediction != self.label {
            // Positions still unmasked before this step: order[step-1..].
            let mut kept: Vec<usize> = self.order[step - 1..].to_vec();
            kept.sort_unstable();
            self.finish(kept, false);
        } else if step == self.order.len() {
            let last = self.order[step - 1];
            self.finish(vec![last], true);
        }
    }

    fn finish(&mut self, positions: Vec<usize>, fallback: bool) {
        self.result = Some(ExtractionResult {
            source_id: self.example.id.clone(),
            trigger: positions
                .into_iter()
                .map(|p| self.example.tokens[p].clone())
                .collect(),
            label: self.label,
            steps: self.steps,
            fallback,
        });
    }

    fn done(&self) -> bool {
        self.result.is_some()
    }
}

fn check_tokens(example: &LabeledExample) -> Result<()> {
    if example.tokens.is_empty() {
        return Err(Error::Contract(format!(
            "example '{}' has no tokens; tokenize the corpus first",
            example.id
        )));
    }
    Ok(())
}

pub fn reduce(example: &LabeledExample, adapter: &dyn ModelAdapter) -> Result<ExtractionResult> {
    reduce_inner(example, adapter, false).map(|(r, _)| r)
}

/// Like [`reduce`] but also returns the per-step trace.
pub fn reduce_traced(
    example: &LabeledExample,
    adapter: &dyn ModelAdapter,
) -> Result<(ExtractionResult, Vec<TraceStep>)> {
    reduce_inner(example, adapter, true).map(|(r, t)| (r, t.unwrap_or_default()))
}

fn reduce_inner(
    example: &LabeledExample,
    adapter: &dyn ModelAdapter,
    traced: bool,
) -> Result<(ExtractionResult, Option<Vec<TraceStep>>)> {
    check_tokens(example)?;
    let label = adapter::predict(adapter, &example.tokens)?.label;
    let attributions = adapter::attribute(adapter, &example.tokens)?;
    let mask = adapter.mask_token().to_owned();
    let mut r = Reducer::new(example, &mask, label, &attributions, traced);
    while !r.done() {
        let state = r.advance().clone();
        let pred = adapter::predict(adapter, &state)?.label;
        r.observe(pred);
    }
    let trace = r.trace.take();
    Ok((r.result.expect("finished reducer has a result"), trace))
}

/// Reduces many examples in lockstep, sending every still-running reduction's
/// next state to the adapter in one batched call per step.
///
/// Equivalent to calling [`reduce`] on each example; any adapter failure fails
/// the whole batch.
pub fn reduce_many(
    examples: &[&LabeledExample],
    adapter: &dyn ModelAdapter,
) -> Result<Vec<ExtractionResult>> {
    if examples.is_empty() {
        return Ok(Vec::new());
    }
    for ex in examples {
        check_tokens(ex)?;
    }
    let inputs: Vec<Tokens> = examples.iter().map(|e| e.tokens.clone()).collect();
    let preds = adapter::predict_batch(adapter, &inputs)?;
    let attrs = adapter::attribute_batch(adapter, &inputs)?;
    let mask = adapter.mask_token().to_owned();
    let mut reducers: Vec<Reducer<'_>> = examples
        .iter()
        .zip(preds.iter().zip(&attrs))
        .map(|(ex, (p, a))| Reducer::new(ex, &mask, p.label, a, false))
        .collect();
    loop {
        let active: Vec<usize> = (0..reducers.len())
            .filter(|&i| !reducers[i].done())
            .collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<Tokens> = active
            .iter()
            .map(|&i| reducers[i].advance().clone())
            .collect();
        let preds = adapter::predict_batch(adapter, &states)?;
        for (&i, p) in active.iter().zip(preds) {
            reducers[i].observe(p.label);
        }
    }
    Ok(reducers
        .into_iter()
        .map(|r| r.result.expect("finished reducer has a result"))
        .collect())
}
