//! Uniform interface to text-generation backends: an HTTP chat-completion
//! client for hosted LLMs or local SLM servers, and a deterministic scripted
//! mock for tests and offline runs.

use crate::dataset::TaskKind;
use crate::prompting::estimate_tokens;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Generation temperature defaults: 0.7 preserves architectural diversity on
/// generation tasks, 0.3 prioritizes determinism on interface-heavy output.
pub const TEMPERATURE_GENERATION: f64 = 0.7;
pub const TEMPERATURE_INTERFACE_HEAVY: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
    pub stop_sequences: Vec<String>,
}

impl SamplingParams {
    /// Task-kind default: comprehension tasks and tasks marked
    /// interface-heavy sample at 0.3, generation at 0.7.
    pub fn for_kind(kind: TaskKind, interface_heavy: bool) -> SamplingParams {
        let temperature = match kind {
            TaskKind::Comprehension => TEMPERATURE_INTERFACE_HEAVY,
            TaskKind::Generation if interface_heavy => TEMPERATURE_INTERFACE_HEAVY,
            TaskKind::Generation => TEMPERATURE_GENERATION,
        };
        SamplingParams {
            temperature,
            max_output_tokens: 4096,
            seed: None,
            stop_sequences: Vec::new(),
        }
    }
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams::for_kind(TaskKind::Generation, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub system_text: String,
    pub user_text: String,
    pub params: SamplingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub prompt_tokens: u32,
    pub output_tokens: u32,
    pub latency_ms: u64,
    pub backend_id: String,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("backend timed out after {0} ms")]
    BackendTimeout(u64),
    #[error("backend error {status}: {body_excerpt}")]
    BackendError { status: u16, body_excerpt: String },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
}

/// A text-generation backend. `fork` yields an independent session for one
/// pipeline run so concurrent replicates never share mutable state.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError>;
    fn id(&self) -> &str;
    fn fork(&self) -> Box<dyn Backend>;
}

/// Fixed system-text clause suppressing chain-of-thought so output tokens go
/// to the artifact. Comprehension tasks with a named output schema are told
/// to emit that file's content instead.
pub fn suppression_preamble(kind: TaskKind, expected_schema: Option<&str>) -> String {
    match (kind, expected_schema) {
        (TaskKind::Comprehension, Some(schema)) => format!(
            "Do not explain your reasoning. Respond with the content of {schema} and nothing else."
        ),
        (TaskKind::Comprehension, None) => {
            "Do not explain your reasoning. Answer concisely with only the requested information."
                .to_string()
        }
        (TaskKind::Generation, _) => {
            "Do not explain your reasoning. Respond with only the requested Verilog code block; \
             no prose before or after it."
                .to_string()
        }
    }
}

/// Retries `complete` once after a failure when `retries` > 0 and returns the
/// last error if every attempt fails.
pub fn complete_with_retry(
    backend: &dyn Backend,
    request: &ModelRequest,
    retries: u32,
) -> Result<ModelResponse, ModelError> {
    let mut last = backend.complete(request);
    for _ in 0..retries {
        if last.is_ok() {
            break;
        }
        last = backend.complete(request);
    }
    last
}

// --- HTTP chat-completion backend ---

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    /// Bearer token, typically read from the environment variable named in
    /// the config file.
    pub api_key: Option<String>,
    pub request_timeout: Duration,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: "http://localhost:8000/v1/chat/completions".into(),
            model: "local-slm".into(),
            api_key: None,
            request_timeout: Duration::from_secs(120),
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    id: String,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    stop: Vec<String>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> HttpBackend {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .expect("reqwest client");
        let id = format!("http:{}", config.model);
        HttpBackend { config, client, id }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let started = Instant::now();
        let mut messages = Vec::new();
        if !request.system_text.is_empty() {
            messages.push(ChatMessage { role: "system", content: &request.system_text });
        }
        messages.push(ChatMessage { role: "user", content: &request.user_text });
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: request.params.temperature,
            max_tokens: request.params.max_output_tokens,
            seed: request.params.seed,
            stop: request.params.stop_sequences.clone(),
        };

        let mut req = self.client.post(&self.config.base_url).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let response = req.send().map_err(|e| {
            if e.is_timeout() {
                ModelError::BackendTimeout(started.elapsed().as_millis() as u64)
            } else {
                ModelError::BackendError { status: 0, body_excerpt: e.to_string() }
            }
        })?;

        let status = response.status();
        let text_body = response.text().map_err(|e| ModelError::BackendError {
            status: status.as_u16(),
            body_excerpt: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(ModelError::BackendError {
                status: status.as_u16(),
                body_excerpt: text_body.chars().take(300).collect(),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text_body).map_err(|e| {
            ModelError::BackendError { status: status.as_u16(), body_excerpt: e.to_string() }
        })?;
        let text = parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .unwrap_or_default();
        if text.is_empty() {
            return Err(ModelError::EmptyCompletion);
        }
        let (prompt_tokens, output_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (
                estimate_tokens(&request.system_text) + estimate_tokens(&request.user_text),
                estimate_tokens(&text),
            ),
        };
        Ok(ModelResponse {
            text,
            prompt_tokens,
            output_tokens,
            latency_ms: started.elapsed().as_millis() as u64,
            backend_id: self.id.clone(),
        })
    }

    fn id(&self) -> &str {
        &self.id
    }

    fn fork(&self) -> Box<dyn Backend> {
        Box::new(HttpBackend { config: self.config.clone(), client: self.client.clone(), id: self.id.clone() })
    }
}

// --- Deterministic scripted mock ---

/// One scripted step: either a reply text or an injected failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockStep {
    Text { text: String },
    Error { error: String },
}

/// Replays an ordered response list keyed by call index. Bit-reproducible:
/// the same script and request sequence always produce the same responses.
pub struct MockBackend {
    script: Vec<MockStep>,
    cursor: Mutex<usize>,
}

impl MockBackend {
    pub fn new(script: Vec<MockStep>) -> MockBackend {
        MockBackend { script, cursor: Mutex::new(0) }
    }

    pub fn from_texts<S: Into<String>>(texts: Vec<S>) -> MockBackend {
        MockBackend::new(texts.into_iter().map(|t| MockStep::Text { text: t.into() }).collect())
    }

    /// Parses the script file format: a JSON array of `{"text": ...}` or
    /// `{"error": "timeout"|"http:<status>"|"empty"}` entries.
    pub fn from_json(json: &str) -> Result<MockBackend, serde_json::Error> {
        Ok(MockBackend::new(serde_json::from_str(json)?))
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let mut cursor = self.cursor.lock().expect("mock cursor");
        let step = self.script.get(*cursor);
        *cursor += 1;
        drop(cursor);
        match step {
            None => Err(ModelError::BackendError {
                status: 0,
                body_excerpt: "mock script exhausted".into(),
            }),
            Some(MockStep::Error { error }) => match error.as_str() {
                "timeout" => Err(ModelError::BackendTimeout(0)),
                "empty" => Err(ModelError::EmptyCompletion),
                other => {
                    let status = other
                        .strip_prefix("http:")
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(500);
                    Err(ModelError::BackendError { status, body_excerpt: error.clone() })
                }
            },
            Some(MockStep::Text { text }) => {
                if text.is_empty() {
                    return Err(ModelError::EmptyCompletion);
                }
                Ok(ModelResponse {
                    text: text.clone(),
                    prompt_tokens: estimate_tokens(&request.system_text)
                        + estimate_tokens(&request.user_text),
                    output_tokens: estimate_tokens(text),
                    latency_ms: 0,
                    backend_id: "mock".into(),
                })
            }
        }
    }

    fn id(&self) -> &str {
        "mock"
    }

    /// Fresh cursor over the same script: each pipeline run replays from the
    /// top, keeping batch replicates independent and deterministic.
    fn fork(&self) -> Box<dyn Backend> {
        Box::new(MockBackend { script: self.script.clone(), cursor: Mutex::new(0) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn request(text: &str) -> ModelRequest {
        ModelRequest {
            system_text: "sys".into(),
            user_text: text.into(),
            params: SamplingParams::default(),
        }
    }

    #[test]
    fn temperatures_follow_task_kind() {
        assert_eq!(SamplingParams::for_kind(TaskKind::Generation, false).temperature, 0.7);
        assert_eq!(SamplingParams::for_kind(TaskKind::Comprehension, false).temperature, 0.3);
        assert_eq!(SamplingParams::for_kind(TaskKind::Generation, true).temperature, 0.3);
    }

    #[test]
    fn mock_replays_script_verbatim() {
        let mock = MockBackend::from_texts(vec!["module m; endmodule"]);
        let out = mock.complete(&request("hi")).unwrap();
        assert_eq!(out.text, "module m; endmodule");
        assert_eq!(out.backend_id, "mock");
    }

    #[test]
    fn mock_empty_reply_is_empty_completion() {
        let mock = MockBackend::from_texts(vec![""]);
        assert!(matches!(mock.complete(&request("hi")), Err(ModelError::EmptyCompletion)));
    }

    #[test]
    fn mock_error_injection() {
        let mock = MockBackend::from_json(
            r#"[{"error":"timeout"},{"error":"http:500"},{"error":"empty"},{"text":"ok module"}]"#,
        )
        .unwrap();
        assert!(matches!(mock.complete(&request("a")), Err(ModelError::BackendTimeout(_))));
        assert!(matches!(
            mock.complete(&request("b")),
            Err(ModelError::BackendError { status: 500, .. })
        ));
        assert!(matches!(mock.complete(&request("c")), Err(ModelError::EmptyCompletion)));
        assert_eq!(mock.complete(&request("d")).unwrap().text, "ok module");
    }

    #[test]
    fn fork_resets_cursor() {
        let mock = MockBackend::from_texts(vec!["one", "two"]);
        assert_eq!(mock.complete(&request("x")).unwrap().text, "one");
        let fork = mock.fork();
        assert_eq!(fork.complete(&request("x")).unwrap().text, "one");
        assert_eq!(mock.complete(&request("x")).unwrap().text, "two");
    }

    #[test]
    fn retry_consumes_next_script_step() {
        let mock = MockBackend::from_json(r#"[{"error":"http:500"},{"text":"recovered"}]"#).unwrap();
        let out = complete_with_retry(&mock, &request("x"), 1).unwrap();
        assert_eq!(out.text, "recovered");
    }

    #[test]
    fn retry_exhaustion_returns_last_error() {
        let mock = MockBackend::from_json(r#"[{"error":"http:500"},{"error":"http:503"}]"#).unwrap();
        let err = complete_with_retry(&mock, &request("x"), 1).unwrap_err();
        assert!(matches!(err, ModelError::BackendError { status: 503, .. }));
    }

    #[test]
    fn preamble_variants() {
        let gen = suppression_preamble(TaskKind::Generation, None);
        assert!(gen.contains("only") && gen.contains("code block"));
        let schema = suppression_preamble(TaskKind::Comprehension, Some("subjective.txt"));
        assert!(schema.contains("subjective.txt"));
        let generic = suppression_preamble(TaskKind::Comprehension, None);
        assert!(generic.to_lowercase().contains("concise"));
    }

    /// Serves one canned HTTP response on a local port, then closes.
    fn one_shot_server(status_line: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 4096];
                let _ = stream.read(&mut buf);
                let response = format!(
                    "HTTP/1.1 {status_line}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    #[test]
    fn http_backend_parses_completion() {
        let url = one_shot_server(
            "200 OK",
            r#"{"choices":[{"message":{"content":"module m; endmodule"}}],"usage":{"prompt_tokens":10,"completion_tokens":7}}"#,
        );
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: url,
            model: "test".into(),
            api_key: None,
            request_timeout: Duration::from_secs(5),
        });
        let out = backend.complete(&request("hello")).unwrap();
        assert_eq!(out.text, "module m; endmodule");
        assert_eq!(out.prompt_tokens, 10);
        assert_eq!(out.output_tokens, 7);
    }

    #[test]
    fn http_backend_maps_500() {
        let url = one_shot_server("500 Internal Server Error", r#"{"error":"overloaded"}"#);
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: url,
            model: "test".into(),
            api_key: None,
            request_timeout: Duration::from_secs(5),
        });
        let err = backend.complete(&request("hello")).unwrap_err();
        assert!(matches!(err, ModelError::BackendError { status: 500, .. }));
    }

    #[test]
    fn http_backend_times_out_on_stalled_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        // Accept and stall without responding; drop after the test window.
        let handle = std::thread::spawn(move || {
            if let Ok((stream, _)) = listener.accept() {
                std::thread::sleep(Duration::from_millis(1500));
                drop(stream);
            }
        });
        let backend = HttpBackend::new(HttpBackendConfig {
            base_url: format!("http://{addr}/v1/chat/completions"),
            model: "test".into(),
            api_key: None,
            request_timeout: Duration::from_millis(300),
        });
        let started = Instant::now();
        let err = backend.complete(&request("hello")).unwrap_err();
        assert!(matches!(err, ModelError::BackendTimeout(_)));
        assert!(started.elapsed() < Duration::from_millis(1300));
        handle.join().unwrap();
    }
}
