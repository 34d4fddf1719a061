//! JSON bodies of the model-server protocol.
//!
//! ```text
//! POST /tokenize  {"texts":[..]}            -> {"tokens":[[..],..]}
//! POST /predict   {"inputs":[[..],..]}      -> {"predictions":[{"label":int,"probs":[..]},..]}
//! POST /attribute {"inputs":[[..],..]}      -> {"attributions":[[..],..]}
//! GET  /meta                                -> {"label_count":int,"mask_token":str,"model_name":str}
//! ```

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub texts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub tokens: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputsRequest {
    pub inputs: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WirePrediction {
    pub label: usize,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<WirePrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeResponse {
    pub attributions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub label_count: usize,
    pub mask_token: String,
    pub model_name: String,
}

pub const TOKENIZE: &str = "/tokenize";
pub const PREDICT: &str = "/predict";
pub const ATTRIBUTE: &str = "/attribute";
pub const META: &str = "/meta";
