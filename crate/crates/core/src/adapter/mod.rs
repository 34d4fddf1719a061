//! The black-box model contract.
//!
//! Everything downstream talks to the audited classifier through [`ModelAdapter`]:
//! tokenization, batched label prediction over (partially masked) token
//! sequences, and per-token attribution toward the predicted label.
//!
//! The free functions [`predict_batch`], [`predict`] and [`attribute`] wrap the
//! raw trait methods with batching and response validation; call those rather
//! than the trait methods directly.

mod remote;
mod toy;
pub mod wire;

pub use remote::{RemoteAdapter, RemoteConfig};
pub use toy::{ToyLexiconModel, ToyModelBuilder, ToyModelSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Tokens = Vec<String>;

/// Tolerance on `Σ probabilities = 1`.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Label is the argmax of `probabilities`, ties going to the lowest label id.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let label = argmax_lowest(&probabilities);
        Prediction {
            label,
            probabilities,
        }
    }

    pub fn validate(&self, label_count: usize) -> Result<()> {
        if self.probabilities.len() != label_count {
            return Err(Error::Protocol(format!(
                "prediction has {} probabilities, expected {label_count}",
                self.probabilities.len()
            )));
        }
        if self
            .probabilities
            .iter()
            .any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0)
        {
            return Err(Error::Protocol("probability outside [0, 1]".into()));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::Protocol(format!("probabilities sum to {sum}")));
        }
        if self.label >= label_count {
            return Err(Error::Protocol(format!(
                "label {} out of range",
                self.label
            )));
        }
        let max = self
            .probabilities
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        if self.probabilities[self.label] < max {
            return Err(Error::Protocol(format!(
                "label {} is not the argmax of its probabilities",
                self.label
            )));
        }
        Ok(())
    }
}

/// Index of the maximum value; the first one wins on ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// One importance score per input token position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributionVector(pub Vec<f64>);

impl AttributionVector {
    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub trait ModelAdapter: Send + Sync {
    /// Stable identity string; corpora cache token sequences under it.
    fn identity(&self) -> String;

    fn label_count(&self) -> usize;

    fn mask_token(&self) -> &str;

    /// Maximum number of sequences sent per call.
    fn batch_size(&self) -> usize;

    fn tokenize_batch(&self, texts: &[String]) -> Result<Vec<Tokens>>;

    fn predict_batch(&self, inputs: &[Tokens]) -> Result<Vec<Prediction>>;

    /// Attribution of each token toward the score of the label predicted for that input.
    fn attribute_batch(&self, inputs: &[Tokens]) -> Result<Vec<AttributionVector>>;
}

fn check_non_empty(inputs: &[Tokens]) -> Result<()> {
    if let Some(i) = inputs.iter().position(|t| t.is_empty()) {
        return Err(Error::Contract(format!("input {i} has no tokens")));
    }
    Ok(())
}

/// Predicts every input, chunked by the adapter's batch size, order preserved.
pub fn predict_batch(adapter: &dyn ModelAdapter, inputs: &[Tokens]) -> Result<Vec<Prediction>> {
    check_non_empty(inputs)?;
    let label_count = adapter.label_count();
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(adapter.batch_size().max(1)) {
        let preds = adapter.predict_batch(chunk)?;
        if preds.len() != chunk.len() {
            return Err(Error::Protocol(format!(
                "got {} predictions for {} inputs",
                preds.len(),
                chunk.len()
            )));
        }
        for p in &preds {
            p.validate(label_count)?;
        }
        out.extend(preds);
    }
    Ok(out)
}

pub fn predict(adapter: &dyn ModelAdapter, tokens: &[String]) -> Result<Prediction> {
    let mut preds = predict_batch(adapter, &[tokens.to_vec()])?;
    Ok(preds.remove(0))
}

pub fn attribute_batch(
    adapter: &dyn ModelAdapter,
    inputs: &[Tokens],
) -> Result<Vec<AttributionVector>> {
    check_non_empty(inputs)?;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(adapter.batch_size().max(1)) {
        let attrs = adapter.attribute_batch(chunk)?;
        if attrs.len() != chunk.len() {
            return Err(Error::Protocol(format!(
                "got {} attribution vectors for {} inputs",
                attrs.len(),
                chunk.len()
            )));
        }
        for (a, input) in attrs.iter().zip(chunk) {
            if a.len() != input.len() {
                return Err(Error::Protocol(format!(
                    "attribution length {} does not match {} tokens",
                    a.len(),
                    input.len()
                )));
            }
            if a.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Protocol("non-finite attribution score".into()));
            }
        }
        out.extend(attrs);
    }
    Ok(out)
}

pub fn attribute(adapter: &dyn ModelAdapter, tokens: &[String]) -> Result<AttributionVector> {
    let mut attrs = attribute_batch(adapter, &[tokens.to_vec()])?;
    Ok(attrs.remove(0))
}
