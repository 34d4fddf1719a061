//! In-process HTTP stand-ins for the model server.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

use shortcut_core::adapter::ToyLexiconModel;

/// One recorded exchange.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exchange {
    pub method: String,
    pub path: String,
    pub request: Option<Value>,
    pub status: u16,
    pub response: Value,
}

pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").unwrap()
}

/// Serves `handler(method, path, body) -> (status, body)` on an ephemeral port.
pub fn spawn<F>(handler: F) -> MockServer
where
    F: Fn(&str, &str, Option<Value>) -> (u16, Value) + Send + 'static,
{
    let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let (srv, counter) = (server.clone(), hits.clone());
    let handle = thread::spawn(move || {
        for mut req in srv.incoming_requests() {
            counter.fetch_add(1, Ordering::SeqCst);
            let method = if *req.method() == Method::Get {
                "GET"
            } else {
                "POST"
            };
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let parsed =
                (!body.is_empty()).then(|| serde_json::from_str(&body).unwrap_or(Value::Null));
            let (status, out) = handler(method, req.url(), parsed);
            let resp = Response::from_string(out.to_string())
                .with_status_code(status)
                .with_header(json_header());
            let _ = req.respond(resp);
        }
    });
    MockServer {
        url,
        hits,
        server,
        handle: Some(handle),
    }
}

/// Answers the four endpoints from a toy model, exactly as a real server would.
pub fn toy_handler(
    model: ToyLexiconModel,
) -> impl Fn(&str, &str, Option<Value>) -> (u16, Value) + Send {
    move |method, path, body| {
        let inputs = |b: &Option<Value>| -> Vec<Vec<String>> {
            serde_json::from_value(b.as_ref().unwrap()["inputs"].clone()).unwrap()
        };
        match (method, path) {
            ("GET", "/meta") => (
                200,
                json!({"label_count": model.label_names().len(), "mask_token": "[MASK]", "model_name": "toy-served"}),
            ),
            ("POST", "/tokenize") => {
                let texts: Vec<String> =
                    serde_json::from_value(body.unwrap()["texts"].clone()).unwrap();
                let tokens: Vec<Vec<String>> = texts.iter().map(|t| model.tokenize(t)).collect();
                (200, json!({ "tokens": tokens }))
            }
            ("POST", "/predict") => {
                let preds: Vec<Value> = inputs(&body)
                    .iter()
                    .map(|x| {
                        let p = model.predict_one(x);
                        json!({"label": p.label, "probs": p.probabilities})
                    })
                    .collect();
                (200, json!({ "predictions": preds }))
            }
            ("POST", "/attribute") => {
                let attrs: Vec<Vec<f64>> = inputs(&body)
                    .iter()
                    .map(|x| model.attribute_one(x).0)
                    .collect();
                (200, json!({ "attributions": attrs }))
            }
            _ => (404, json!({"error": format!("no route {method} {path}")})),
        }
    }
}

/// Replays recorded exchanges; anything unrecorded gets a 404.
pub fn replay_handler(
    pairs: Vec<Exchange>,
) -> impl Fn(&str, &str, Option<Value>) -> (u16, Value) + Send {
    move |method, path, body| {
        pairs
            .iter()
            .find(|p| p.method == method && p.path == path && p.request == body)
            .map(|p| (p.status, p.response.clone()))
            .unwrap_or((404, json!({"error": "unrecorded request"})))
    }
}
