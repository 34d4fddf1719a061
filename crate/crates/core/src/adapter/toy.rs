use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{argmax_lowest, AttributionVector, ModelAdapter, Prediction, Tokens};
use crate::error::{Error, Result};

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

/// On-disk form of a [`ToyLexiconModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelSpec {
    #[serde(default = "default_name")]
    pub model_name: String,
    pub label_names: Vec<String>,
    #[serde(default = "default_mask")]
    pub mask_token: String,
    #[serde(default)]
    pub bias: Option<Vec<f64>>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub weights: BTreeMap<String, Vec<f64>>,
}

fn default_name() -> String {
    "toy-lexicon".into()
}
fn default_mask() -> String {
    DEFAULT_MASK_TOKEN.into()
}
fn default_temperature() -> f64 {
    1.0
}
fn default_batch() -> usize {
    32
}

/// A linear bag-of-tokens classifier with whitespace tokenization.
///
/// `score_c(x) = bias_c + Σ_{t ∈ x} weights[t][c]`. Unknown tokens and the mask
/// token weigh nothing, so Integrated Gradients from an all-mask baseline is
/// exactly each token's weight toward the predicted label.
#[derive(Clone, Debug)]
pub struct ToyLexiconModel {
    name: String,
    label_names: Vec<String>,
    mask_token: String,
    bias: Vec<f64>,
    temperature: f64,
    batch_size: usize,
    weights: HashMap<String, Vec<f64>>,
}

pub struct ToyModelBuilder {
    spec: ToyModelSpec,
}

impl ToyModelBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.spec.model_name = name.into();
        self
    }

    pub fn mask_token(mut self, mask: impl Into<String>) -> Self {
        self.spec.mask_token = mask.into();
        self
    }

    pub fn bias(mut self, bias: Vec<f64>) -> Self {
        self.spec.bias = Some(bias);
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.spec.temperature = t;
        self
    }

    pub fn batch_size(mut self, b: usize) -> Self {
        self.spec.batch_size = b;
        self
    }

    pub fn weight(mut self, token: impl Into<String>, weights: Vec<f64>) -> Self {
        self.spec.weights.insert(token.into(), weights);
        self
    }

    pub fn build(self) -> Result<ToyLexiconModel> {
        ToyLexiconModel::from_spec(self.spec)
    }
}

impl ToyLexiconModel {
    pub fn builder(label_names: Vec<String>) -> ToyModelBuilder {
        ToyModelBuilder {
            spec: ToyModelSpec {
                model_name: default_name(),
                label_names,
                mask_token: default_mask(),
                bias: None,
                temperature: default_temperature(),
                batch_size: default_batch(),
                weights: BTreeMap::new(),
            },
        }
    }

    pub fn from_spec(spec: ToyModelSpec) -> Result<Self> {
        let n = spec.label_names.len();
        if n == 0 {
            return Err(Error::Config("toy model needs at least one label".into()));
        }
        if !(spec.temperature.is_finite() && spec.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if spec.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if spec.mask_token.is_empty() || spec.mask_token.contains(char::is_whitespace) {
            return Err(Error::Config(
                "mask token must be a single non-empty whitespace-free token".into(),
            ));
        }
        let bias = spec.bias.unwrap_or_else(|| vec![0.0; n]);
        if bias.len() != n || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config(format!("bias must hold {n} finite values")));
        }
        for (tok, w) in &spec.weights {
            if w.len() != n || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "weights for '{tok}' must hold {n} finite values"
                )));
            }
        }
        if let Some(w) = spec.weights.get(&spec.mask_token) {
            if w.iter().any(|v| *v != 0.0) {
                return Err(Error::Config("mask token must carry zero weight".into()));
            }
        }
        Ok(ToyLexiconModel {
            name: spec.model_name,
            label_names: spec.label_names,
            mask_token: spec.mask_token,
            bias,
            temperature: spec.temperature,
            batch_size: spec.batch_size,
            weights: spec.weights.into_iter().collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: ToyModelSpec = serde_json::from_str(&text)?;
        Self::from_spec(spec)
    }

    pub fn to_spec(&self) -> ToyModelSpec {
        ToyModelSpec {
            model_name: self.name.clone(),
            label_names: self.label_names.clone(),
            mask_token: self.mask_token.clone(),
            bias: Some(self.bias.clone()),
            temperature: self.temperature,
            batch_size: self.batch_size,
            weights: self
                .weights
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Weight vector of a token; `None` for unknown tokens.
    pub fn token_weights(&self, token: &str) -> Option<&[f64]> {
        if token == self.mask_token {
            return None;
        }
        self.weights.get(token).map(Vec::as_slice)
    }

    pub fn tokenize(&self, text: &str) -> Tokens {
        text.split_whitespace().map(str::to_owned).collect()
    }

    pub fn scores(&self, tokens: &[String]) -> Vec<f64> {
        let mut s = self.bias.clone();
        for t in tokens {
            if let Some(w) = self.token_weights(t) {
                for (acc, v) in s.iter_mut().zip(w) {
                    *acc += v;
                }
            }
        }
        s
    }

    pub fn predict_one(&self, tokens: &[String]) -> Prediction {
        let scores = self.scores(tokens);
        let label = argmax_lowest(&scores);
        let max = scores[label];
        let exps: Vec<f64> = scores
            .iter()
            .map(|s| ((s - max) / self.temperature).exp())
            .collect();
        let z: f64 = exps.iter().sum();
        Prediction {
            label,
            probabilities: exps.into_iter().map(|e| e / z).collect(),
        }
    }

    pub fn attribute_one(&self, tokens: &[String]) -> AttributionVector {
        let label = argmax_lowest(&self.scores(tokens));
        AttributionVector(
            tokens
                .iter()
                .map(|t| self.token_weights(t).map_or(0.0, |w| w[label]))
                .collect(),
        )
    }
}

impl ModelAdapter for ToyLexiconModel {
    fn identity(&self) -> String {
        format!("toy:{}", self.name)
    }

    fn label_count(&self) -> usize {
        self.label_names.len()
    }

    fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn tokenize_batch(&self, texts: &[String]) -> Result<Vec<Tokens>> {
        Ok(texts.iter().map(|t| self.tokenize(t)).collect())
    }

    fn predict_batch(&self, inputs: &[Tokens]) -> Result<Vec<Prediction>> {
        Ok(inputs.iter().map(|t| self.predict_one(t)).collect())
    }

    fn attribute_batch(&self, inputs: &[Tokens]) -> Result<Vec<AttributionVector>> {
        Ok(inputs.iter().map(|t| self.attribute_one(t)).collect())
    }
}
