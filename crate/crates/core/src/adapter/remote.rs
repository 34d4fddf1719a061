use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{
    AttributeResponse, InputsRequest, MetaResponse, PredictResponse, TokenizeRequest,
    TokenizeResponse, ATTRIBUTE, META, PREDICT, TOKENIZE,
};
use super::{AttributionVector, ModelAdapter, Prediction, Tokens};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub batch_size: usize,
    pub max_connections: usize,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "http://127.0.0.1:8080".into(),
            batch_size: 32,
            max_connections: 4,
            timeout_secs: 120,
            max_retries: 3,
            retry_backoff_ms: 200,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

/// Client for a model server speaking the JSON protocol in [`super::wire`].
pub struct RemoteAdapter {
    config: RemoteConfig,
    agent: ureq::Agent,
    meta: MetaResponse,
    slots: Slots,
}

impl RemoteAdapter {
    /// Connects and fetches `/meta`.
    pub fn connect(config: RemoteConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .max_idle_connections(config.max_connections.max(1))
            .build();
        let slots = Slots::new(config.max_connections);
        let mut adapter = RemoteAdapter {
            config,
            agent,
            meta: MetaResponse {
                label_count: 0,
                mask_token: String::new(),
                model_name: String::new(),
            },
            slots,
        };
        let meta: MetaResponse = adapter.with_retry(|| adapter.get(META))?;
        if meta.label_count == 0 {
            return Err(Error::Protocol("server reports zero labels".into()));
        }
        if meta.mask_token.is_empty() {
            return Err(Error::Protocol(
                "server exposes no mask token; input reduction needs one".into(),
            ));
        }
        adapter.meta = meta;
        Ok(adapter)
    }

    pub fn meta(&self) -> &MetaResponse {
        &self.meta
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    fn with_retry<T>(&self, mut call: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let wait = self
                        .config
                        .retry_backoff_ms
                        .saturating_mul(1 << attempt.min(16));
                    log::warn!("retrying after {e} (attempt {})", attempt + 1);
                    thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let _slot = self.slots.acquire();
        decode(self.agent.get(&self.url(path)).call(), path)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.with_retry(|| {
            let _slot = self.slots.acquire();
            decode(self.agent.post(&self.url(path)).send_json(body), path)
        })
    }
}

fn decode<T: DeserializeOwned>(
    resp: std::result::Result<ureq::Response, ureq::Error>,
    path: &str,
) -> Result<T> {
    match resp {
        Ok(r) => r
            .into_json::<T>()
            .map_err(|e| Error::Protocol(format!("{path}: bad response body: {e}"))),
        Err(ureq::Error::Status(code, r)) => {
            let body = r.into_string().unwrap_or_default();
            if code >= 500 {
                Err(Error::Transport(format!("{path}: HTTP {code}: {body}")))
            } else {
                Err(Error::Protocol(format!("{path}: HTTP {code}: {body}")))
            }
        }
        Err(ureq::Error::Transport(t)) => Err(Error::Transport(format!("{path}: {t}"))),
    }
}

impl ModelAdapter for RemoteAdapter {
    fn identity(&self) -> String {
        format!("remote:{}", self.meta.model_name)
    }

    fn label_count(&self) -> usize {
        self.meta.label_count
    }

    fn mask_token(&self) -> &str {
        &self.meta.mask_token
    }

    fn batch_size(&self) -> usize {
        self.config.batch_size
    }

    fn tokenize_batch(&self, texts: &[String]) -> Result<Vec<Tokens>> {
        let resp: TokenizeResponse = self.post(
            TOKENIZE,
            &TokenizeRequest {
                texts: texts.to_vec(),
            },
        )?;
        if resp.tokens.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "/tokenize returned {} sequences for {} texts",
                resp.tokens.len(),
                texts.len()
            )));
        }
        Ok(resp.tokens)
    }

    fn predict_batch(&self, inputs: &[Tokens]) -> Result<Vec<Prediction>> {
        let resp: PredictResponse = self.post(
            PREDICT,
            &InputsRequest {
                inputs: inputs.to_vec(),
            },
        )?;
        Ok(resp
            .predictions
            .into_iter()
            .map(|p| Prediction {
                label: p.label,
                probabilities: p.probs,
            })
            .collect())
    }

    fn attribute_batch(&self, inputs: &[Tokens]) -> Result<Vec<AttributionVector>> {
        let resp: AttributeResponse = self.post(
            ATTRIBUTE,
            &InputsRequest {
                inputs: inputs.to_vec(),
            },
        )?;
        Ok(resp
            .attributions
            .into_iter()
            .map(AttributionVector)
            .collect())
    }
}
