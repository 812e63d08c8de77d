use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chain::Candidate;

use super::{Backend, BackendConfig, GatewayError, InFlight, SampleRequest};

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

struct ApiKey(String);

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

/// Client for OpenAI-compatible `/chat/completions`, `/embeddings` and,
/// when the server supports it, echo-scored `/completions`.
#[derive(Debug)]
pub struct HttpBackend {
    base_url: String,
    api_key: Option<ApiKey>,
    embedding_model: Option<String>,
    supports_scoring: bool,
    client: reqwest::blocking::Client,
    gate: InFlight,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    n: usize,
    temperature: f64,
    top_p: f64,
    logprobs: bool,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    #[serde(default)]
    index: usize,
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f64>,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: String,
    max_tokens: u32,
    echo: bool,
    logprobs: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    logprobs: CompletionLogprobs,
}

#[derive(Deserialize)]
struct CompletionLogprobs {
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

impl HttpBackend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        let base_url = config
            .base_url
            .clone()
            .ok_or_else(|| GatewayError::Config("http backend requires base_url".into()))?;
        let api_key = match &config.api_key_env {
            Some(var) => std::env::var(var).ok().filter(|k| !k.is_empty()).map(ApiKey),
            None => None,
        };
        if api_key.is_none() {
            log::info!("no API key found; sending unauthenticated requests");
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            embedding_model: config.embedding_model.clone(),
            supports_scoring: config.supports_scoring,
            client,
            gate: InFlight::new(config.max_in_flight),
        })
    }

    /// Backend for the public OpenAI endpoint.
    pub fn openai(api_key_env: &str) -> Result<Self, GatewayError> {
        HttpBackend::from_config(&BackendConfig {
            kind: super::BackendKind::Http,
            base_url: Some(DEFAULT_BASE_URL.into()),
            api_key_env: Some(api_key_env.into()),
            ..BackendConfig::default()
        })
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, path: &str, body: &Req) -> Result<Resp, GatewayError> {
        let _permit = self.gate.acquire();
        let url = format!("{}/{}", self.base_url, path);
        let mut req = self.client.post(&url).json(body);
        if let Some(ApiKey(key)) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.without_url().to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(GatewayError::Http {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Decode(format!("{path}: {e}")))
    }
}

impl Backend for HttpBackend {
    fn chat_sample(&self, req: &SampleRequest<'_>) -> Result<Vec<Candidate>, GatewayError> {
        if req.n == 0 {
            return Err(GatewayError::InvalidRequest("n must be >= 1".into()));
        }
        let body = ChatRequest {
            model: req.model,
            messages: [Message {
                role: "user",
                content: req.prompt,
            }],
            n: req.n,
            temperature: req.temperature,
            top_p: req.top_p,
            logprobs: true,
        };
        let mut resp: ChatResponse = self.post("chat/completions", &body)?;
        resp.choices.sort_by_key(|c| c.index);
        resp.choices
            .into_iter()
            .map(|choice| {
                let text = choice
                    .message
                    .content
                    .filter(|t| !t.is_empty())
                    .ok_or_else(|| GatewayError::Decode("choice without content".into()))?;
                let tokens = choice
                    .logprobs
                    .and_then(|lp| lp.content)
                    .map(|toks| toks.into_iter().map(|t| t.logprob.min(0.0)).collect::<Vec<_>>());
                Ok(match tokens {
                    Some(lp) if !lp.is_empty() => Candidate::with_token_logprobs(text, lp),
                    _ => Candidate::new(text),
                })
            })
            .collect()
    }

    fn score_continuation(&self, model: &str, context: &str, continuation: &str) -> Result<Vec<f64>, GatewayError> {
        if !self.supports_scoring {
            return Err(GatewayError::Capability("score continuations"));
        }
        if continuation.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("continuation must be nonempty".into()));
        }
        let body = CompletionRequest {
            model,
            prompt: format!("{context}{continuation}"),
            max_tokens: 0,
            echo: true,
            logprobs: 0,
        };
        let resp: CompletionResponse = self.post("completions", &body)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::Decode("no completion choice".into()))?;
        let boundary = context.chars().count();
        let lp = choice.logprobs;
        let scored: Vec<f64> = lp
            .text_offset
            .iter()
            .zip(&lp.token_logprobs)
            .filter(|(off, _)| **off >= boundary)
            .filter_map(|(_, lp)| lp.map(|v| v.min(0.0)))
            .collect();
        if scored.is_empty() {
            return Err(GatewayError::Decode("no continuation tokens were scored".into()));
        }
        Ok(scored)
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        let model = self.embedding_model.as_deref().unwrap_or(model);
        let mut resp: EmbeddingResponse = self.post("embeddings", &EmbeddingRequest { model, input: texts })?;
        if resp.data.len() != texts.len() {
            return Err(GatewayError::Decode(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.data.len()
            )));
        }
        resp.data.sort_by_key(|d| d.index);
        let dim = resp.data[0].embedding.len();
        if resp.data.iter().any(|d| d.embedding.len() != dim) {
            return Err(GatewayError::Decode("embeddings differ in dimension".into()));
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn api_key_is_redacted_in_debug() {
        let k = ApiKey("sk-secret".into());
        assert!(!format!("{k:?}").contains("secret"));
    }

    #[test]
    fn http_requires_base_url() {
        let cfg = BackendConfig {
            kind: super::super::BackendKind::Http,
            ..BackendConfig::default()
        };
        assert!(matches!(HttpBackend::from_config(&cfg), Err(GatewayError::Config(_))));
    }

    #[test]
    fn chat_request_wire_fields() {
        let body = ChatRequest {
            model: "m",
            messages: [Message {
                role: "user",
                content: "hi",
            }],
            n: 2,
            temperature: 0.6,
            top_p: 0.9,
            logprobs: true,
        };
        assert_eq!(
            serde_json::to_string(&body).unwrap(),
            r#"{"model":"m","messages":[{"role":"user","content":"hi"}],"n":2,"temperature":0.6,"top_p":0.9,"logprobs":true}"#
        );
    }
}
