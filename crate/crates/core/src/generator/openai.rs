//! Client for OpenAI-compatible `/chat/completions` endpoints.

use std::env;
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::completer::{Completer, Completion, CompletionError, CompletionRequest};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "LADDERFORGE_API_KEY";

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Option<ResponseMessage>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct OpenAiCompleter {
    client: Client,
    api_key: Option<String>,
    backoff: Duration,
}

impl OpenAiCompleter {
    pub fn new(api_key: Option<String>) -> Self {
        Self {
            client: Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("HTTP client"),
            api_key: api_key.filter(|k| !k.trim().is_empty()),
            backoff: Duration::from_secs(1),
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env() -> Self {
        Self::new(env::var(API_KEY_ENV).ok())
    }

    /// Base delay between attempts; doubles after each retry.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn attempt(&self, url: &str, key: &str, body: &ChatRequest<'_>) -> Result<Completion, Attempt> {
        let response = self
            .client
            .post(url)
            .bearer_auth(key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(Attempt::Fatal(CompletionError::Rejected {
                status: status.as_u16(),
                body,
            }));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| Attempt::Fatal(CompletionError::Generation(format!("bad response body: {e}"))))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or(Attempt::Fatal(CompletionError::EmptyResponse))?;
        let text = choice.message.and_then(|m| m.content).unwrap_or_default();
        if text.trim().is_empty() {
            return Err(Attempt::Fatal(CompletionError::EmptyResponse));
        }
        Ok(Completion {
            text,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}

enum Attempt {
    Retry(String),
    Fatal(CompletionError),
}

impl Completer for OpenAiCompleter {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, CompletionError> {
        let key = self
            .api_key
            .as_deref()
            .ok_or(CompletionError::MissingCredential(API_KEY_ENV))?;
        let params = &request.params;
        let url = format!("{}/chat/completions", params.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &params.model_name,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let attempts = params.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                thread::sleep(self.backoff * 2u32.saturating_pow(n - 1));
            }
            match self.attempt(&url, key, &body) {
                Ok(completion) => return Ok(completion),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => last = message,
            }
        }
        Err(CompletionError::Transport {
            attempts,
            message: last,
        })
    }
}
