//! HTTP processor and embedder clients.
//!
//! The processor speaks the common chat-completions shape: the composed
//! prompt is sent as a single system message and the reply text is read from
//! `choices[0].message.content`. The embedder posts `{model, input}` and reads
//! `data[0].embedding`. Both use blocking clients, so they must be created,
//! used and dropped off any async runtime; the hub runs each agent on its
//! own thread for that reason.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};
use vctx_core::embed::{normalize, EmbedError, Embedder, SharedEmbedder};
use vctx_core::runtime::{
    default_embedder, default_processor, AgentConfig, AgentError, EmbedderBinding, Processor,
    ProcessorBinding, ProcessorError,
};

use crate::config::HttpSettings;

enum Failure {
    Retryable(String),
    Fatal(String),
}

/// Runs `attempt` up to `1 + retries` times with doubling backoff.
fn with_retries<T>(
    settings: &HttpSettings,
    mut attempt: impl FnMut() -> Result<T, Failure>,
) -> Result<T, String> {
    let mut delay = Duration::from_millis(settings.backoff_ms);
    let mut last = String::new();
    for i in 0..=settings.retries {
        if i > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        match attempt() {
            Ok(v) => return Ok(v),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retryable(e)) => last = e,
        }
    }
    Err(format!("{last} (after {} attempts)", settings.retries + 1))
}

#[derive(Debug, Clone)]
struct JsonClient {
    client: Client,
    endpoint: String,
    api_key: Option<String>,
    settings: HttpSettings,
}

impl JsonClient {
    fn new(endpoint: &str, settings: &HttpSettings) -> Result<Self, AgentError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| AgentError::Backend(e.to_string()))?;
        Ok(JsonClient {
            client,
            endpoint: endpoint.to_string(),
            api_key: settings.api_key(),
            settings: settings.clone(),
        })
    }

    fn post(&self, body: &Value) -> Result<Value, String> {
        with_retries(&self.settings, || {
            let mut req = self.client.post(&self.endpoint).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
            let status = resp.status();
            if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
                return Err(Failure::Retryable(format!(
                    "{} returned {status}",
                    self.endpoint
                )));
            }
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(Failure::Fatal(format!(
                    "{} returned {status}: {text}",
                    self.endpoint
                )));
            }
            resp.json::<Value>()
                .map_err(|e| Failure::Fatal(format!("bad response body: {e}")))
        })
    }
}

#[derive(Debug)]
pub struct HttpProcessor {
    http: JsonClient,
    model: String,
}

impl HttpProcessor {
    pub fn new(endpoint: &str, model: &str, settings: &HttpSettings) -> Result<Self, AgentError> {
        Ok(HttpProcessor {
            http: JsonClient::new(endpoint, settings)?,
            model: model.to_string(),
        })
    }
}

impl Processor for HttpProcessor {
    fn complete(&mut self, prompt: &str) -> Result<String, ProcessorError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "system", "content": prompt }],
        });
        let resp = self.http.post(&body).map_err(ProcessorError)?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProcessorError("response has no choices[0].message.content".into()))
    }
}

#[derive(Debug)]
pub struct HttpEmbedder {
    http: JsonClient,
    model: String,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: &str,
        model: &str,
        dim: usize,
        settings: &HttpSettings,
    ) -> Result<Self, AgentError> {
        if dim == 0 {
            return Err(AgentError::Config(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(HttpEmbedder {
            http: JsonClient::new(endpoint, settings)?,
            model: model.to_string(),
            dim,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let resp = self
            .http
            .post(&json!({ "model": self.model, "input": text }))
            .map_err(EmbedError::Backend)?;
        let raw: Vec<f64> = resp["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| EmbedError::Backend("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| EmbedError::Backend("non-numeric embedding".into()))
            })
            .collect::<Result<_, _>>()?;
        if raw.len() != self.dim {
            return Err(EmbedError::Dimension {
                got: raw.len(),
                expected: self.dim,
            });
        }
        Ok(normalize(&raw))
    }
}

/// Processor and embedder for `config`, with HTTP bindings resolved here.
pub fn build_backends(
    config: &AgentConfig,
    settings: &HttpSettings,
) -> Result<(Box<dyn Processor>, SharedEmbedder), AgentError> {
    let processor: Box<dyn Processor> = match &config.processor {
        ProcessorBinding::Http { endpoint, model } => {
            Box::new(HttpProcessor::new(endpoint, model, settings)?)
        }
        other => default_processor(other)?,
    };
    let embedder: SharedEmbedder = match &config.embedder {
        EmbedderBinding::Http {
            endpoint,
            model,
            dim,
        } => Arc::new(HttpEmbedder::new(endpoint, model, *dim, settings)?),
        other => default_embedder(other)?,
    };
    Ok((processor, embedder))
}
