//! Classification through a chat-completions style endpoint.
//!
//! One POST per attempt to `{base_url}/chat/completions` carrying
//! `{model, messages, temperature, max_tokens}`; the reply carries
//! `choices[0].message.content` and `choices[0].finish_reason`. The bundled
//! mock speaks the same protocol, in process ([`MockTransport`]) or over a
//! local port ([`MockServer`]).

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{Prediction, Source};
use crate::corpus::Label;
use crate::cue::{cue_coverage, tokenize, CueLexicon, LEXICON_SIZE};
use crate::prompt::{Message, PromptBundle, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// First backoff delay; doubles per retry, jittered into `[d/2, d]`.
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8080/v1".into(),
            model_name: "mock".into(),
            api_key_env: None,
            timeout_secs: 60.0,
            max_retries: 3,
            temperature: 0.0,
            max_output_tokens: 512,
            backoff_base_ms: 500,
            max_in_flight: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs > 0.0) {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::Config(
                "temperature must be non-negative".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn backoff(&self, retry: u32) -> Duration {
        let full = self.backoff_base_ms as f64 * 2f64.powi(retry as i32);
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        Duration::from_secs_f64(full * jitter / 1000.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub index: u32,
    pub message: Message,
    pub finish_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub model: String,
    pub choices: Vec<ChatChoice>,
}

impl ChatResponse {
    fn single(model: &str, content: String) -> Self {
        ChatResponse {
            model: model.to_string(),
            choices: vec![ChatChoice {
                index: 0,
                message: Message {
                    role: Role::Assistant,
                    content,
                },
                finish_reason: "stop".into(),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Network(_) | TransportError::Protocol(_) => true,
            TransportError::Status { status, .. } => {
                *status >= 500 || *status == 408 || *status == 429
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: TransportError },
    #[error("no verdict line in completion after {attempts} attempts")]
    Unparseable { attempts: u32, raw: String },
    #[error("endpoint rejected credentials (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("endpoint rejected request (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("bundle has neither a cue coverage line nor a transcript")]
    MalformedBundle,
    #[error("invalid endpoint config: {0}")]
    Config(String),
}

/// Sends one request and returns the generated text.
pub trait Transport: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &EndpointConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpTransport {
            agent,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key,
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&body).map_err(|e| TransportError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Protocol("no choices".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub participant_id: String,
    pub fingerprint: String,
    pub raw_response: String,
    pub parsed: Option<Label>,
    /// Wall-clock time across all attempts. Written logs leave it out so
    /// they stay byte-reproducible; the CLI keeps it in the run manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    pub attempt_count: u32,
}

/// Reads the last `Diagnosis:` verdict. `non-AD` spellings are checked
/// before the bare `AD`.
pub fn parse_label(completion: &str) -> Option<Label> {
    // ASCII lowercasing keeps byte offsets aligned with the original
    let lower = completion.to_ascii_lowercase();
    let at = lower.rfind("diagnosis:")?;
    let verdict = lower[at + "diagnosis:".len()..]
        .lines()
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| c.is_whitespace() || "*\"'`:[(".contains(c));
    for non in ["non-ad", "non ad", "non_ad", "nonad"] {
        if verdict.starts_with(non) {
            return Some(Label::NonAd);
        }
    }
    let rest = verdict.strip_prefix("ad")?;
    if rest.chars().next().is_none_or(|c| !c.is_alphanumeric()) {
        Some(Label::Ad)
    } else {
        None
    }
}

pub fn build_request(bundle: &PromptBundle, cfg: &EndpointConfig) -> ChatRequest {
    ChatRequest {
        model: cfg.model_name.clone(),
        messages: bundle.messages.clone(),
        temperature: cfg.temperature,
        max_tokens: cfg.max_output_tokens,
    }
}

/// Sends a bundle with retries. Transport failures, 5xx/408/429 and
/// replies without a verdict line are retried with exponential backoff;
/// 401/403 fail immediately.
pub fn classify(
    participant_id: &str,
    bundle: &PromptBundle,
    cfg: &EndpointConfig,
    transport: &dyn Transport,
) -> Result<(Prediction, CompletionRecord), GatewayError> {
    let request = build_request(bundle, cfg);
    let started = Instant::now();
    let mut attempts = 0;
    let mut last_raw = None;
    let mut last_err = None;
    while attempts <= cfg.max_retries {
        if attempts > 0 {
            std::thread::sleep(cfg.backoff(attempts - 1));
        }
        attempts += 1;
        match transport.complete(&request) {
            Ok(raw) => {
                if let Some(label) = parse_label(&raw) {
                    let record = CompletionRecord {
                        participant_id: participant_id.to_string(),
                        fingerprint: bundle.fingerprint.clone(),
                        raw_response: raw,
                        parsed: Some(label),
                        latency_ms: Some(started.elapsed().as_millis() as u64),
                        attempt_count: attempts,
                    };
                    let prediction = Prediction {
                        participant_id: participant_id.to_string(),
                        label,
                        score: if label == Label::Ad { 1.0 } else { -1.0 },
                        source: Source::Llm,
                    };
                    return Ok((prediction, record));
                }
                last_raw = Some(raw);
            }
            Err(TransportError::Status { status, .. }) if status == 401 || status == 403 => {
                return Err(GatewayError::AuthFailure { status });
            }
            Err(e) if !e.retryable() => {
                return Err(match e {
                    TransportError::Status { status, body } => {
                        GatewayError::Rejected { status, body }
                    }
                    other => GatewayError::Unreachable {
                        attempts,
                        last: other,
                    },
                });
            }
            Err(e) => {
                log::debug!("attempt {attempts} for {participant_id} failed: {e}");
                last_err = Some(e);
                last_raw = None;
            }
        }
    }
    match (last_raw, last_err) {
        (Some(raw), _) => Err(GatewayError::Unparseable { attempts, raw }),
        (None, Some(last)) => Err(GatewayError::Unreachable { attempts, last }),
        (None, None) => Err(GatewayError::Config("max_retries admits no attempt".into())),
    }
}

/// Classifies many bundles with at most `cfg.max_in_flight` requests in
/// flight. Output is sorted by participant id regardless of completion order.
pub fn classify_all(
    items: &[(String, PromptBundle)],
    cfg: &EndpointConfig,
    transport: &dyn Transport,
) -> Result<Vec<(Prediction, CompletionRecord)>, GatewayError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight)
        .build()
        .map_err(|e| GatewayError::Config(e.to_string()))?;
    let results: Vec<Result<(Prediction, CompletionRecord), GatewayError>> = pool.install(|| {
        use rayon::prelude::*;
        items
            .par_iter()
            .map(|(id, bundle)| classify(id, bundle, cfg, transport))
            .collect()
    });
    let mut out = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.0.participant_id.cmp(&b.0.participant_id));
    Ok(out)
}

/// The mock's decision rule: AD iff cue proportion is strictly below `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct MockRule {
    pub threshold: f64,
    pub lexicon: CueLexicon,
}

impl Default for MockRule {
    fn default() -> Self {
        MockRule {
            threshold: 0.5,
            lexicon: CueLexicon::builtin(),
        }
    }
}

impl MockRule {
    pub fn with_threshold(threshold: f64) -> Self {
        MockRule {
            threshold,
            ..Default::default()
        }
    }

    pub fn decide(&self, covered: usize, size: usize) -> Label {
        if (covered as f64) / (size as f64) < self.threshold {
            Label::Ad
        } else {
            Label::NonAd
        }
    }
}

fn coverage_from_line(content: &str) -> Option<(usize, usize)> {
    let line = content
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("Cue coverage:"))?;
    let (k, n) = line.trim().split_once('/')?;
    let k: usize = k.trim().parse().ok()?;
    let n: usize = n.trim().parse().ok()?;
    (n > 0 && k <= n).then_some((k, n))
}

fn embedded_transcript(content: &str) -> Option<&str> {
    let open = content.rfind("<transcript>")?;
    let body = &content[open + "<transcript>".len()..];
    let close = body.find("</transcript>")?;
    Some(&body[..close])
}

/// Deterministic completion for a message list under `rule`. Chain-of-thought
/// prompts are decided from their `Cue coverage: k/12` line; other prompts
/// by re-tokenizing the embedded transcript.
pub fn mock_complete(messages: &[Message], rule: &MockRule) -> Result<String, GatewayError> {
    let last_user = messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .ok_or(GatewayError::MalformedBundle)?;
    let (covered, size, basis) = match coverage_from_line(&last_user.content) {
        Some((k, n)) => (k, n, "reported"),
        None => {
            let text =
                embedded_transcript(&last_user.content).ok_or(GatewayError::MalformedBundle)?;
            let report = cue_coverage(&tokenize(text), &rule.lexicon);
            (report.covered, LEXICON_SIZE, "counted")
        }
    };
    let label = rule.decide(covered, size);
    let relation = if label == Label::Ad {
        "below"
    } else {
        "at or above"
    };
    Ok(format!(
        "Step 1: the {basis} cue coverage is {covered}/{size} ({:.3}).\n\
         Step 2: this is {relation} the screening threshold of {:.2}.\n\
         Diagnosis: {}",
        covered as f64 / size as f64,
        rule.threshold,
        label.verdict()
    ))
}

pub fn mock_classify(bundle: &PromptBundle, rule: &MockRule) -> Result<String, GatewayError> {
    mock_complete(&bundle.messages, rule)
}

/// Injected failure for one mock request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Status(u16),
    Network,
    NoVerdict,
}

/// Fault behaviour shared by the in-process and HTTP mocks: the queued
/// faults are consumed one per request, then `always` (if any) applies.
#[derive(Debug, Default)]
pub struct FaultPlan {
    queue: Mutex<VecDeque<Fault>>,
    always: Option<Fault>,
    requests: AtomicUsize,
}

impl FaultPlan {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(first: Vec<Fault>, always: Option<Fault>) -> Self {
        FaultPlan {
            queue: Mutex::new(first.into()),
            always,
            ..Default::default()
        }
    }

    pub fn first(faults: Vec<Fault>) -> Self {
        FaultPlan {
            queue: Mutex::new(faults.into()),
            ..Default::default()
        }
    }

    pub fn always(fault: Fault) -> Self {
        FaultPlan {
            always: Some(fault),
            ..Default::default()
        }
    }

    fn next(&self) -> Option<Fault> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let queued = self.queue.lock().expect("fault queue").pop_front();
        queued.or_else(|| self.always.clone())
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

/// In-process mock endpoint.
pub struct MockTransport {
    pub rule: MockRule,
    pub faults: FaultPlan,
}

impl MockTransport {
    pub fn new(rule: MockRule) -> Self {
        MockTransport {
            rule,
            faults: FaultPlan::none(),
        }
    }
}

impl Transport for MockTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        match self.faults.next() {
            Some(Fault::Status(status)) => Err(TransportError::Status {
                status,
                body: "injected".into(),
            }),
            Some(Fault::Network) => Err(TransportError::Network("injected".into())),
            Some(Fault::NoVerdict) => Ok("I cannot tell.".into()),
            None => {
                mock_complete(&request.messages, &self.rule).map_err(|e| TransportError::Status {
                    status: 400,
                    body: e.to_string(),
                })
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
}

pub struct MockServerOptions {
    pub rule: MockRule,
    pub faults: FaultPlan,
    /// When set, requests must carry `Authorization: Bearer <key>`.
    pub required_key: Option<String>,
}

impl Default for MockServerOptions {
    fn default() -> Self {
        MockServerOptions {
            rule: MockRule::default(),
            faults: FaultPlan::none(),
            required_key: None,
        }
    }
}

/// Mock endpoint over HTTP on a local port (`0` picks a free one).
/// Stops when dropped.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
    options: Arc<MockServerOptions>,
}

impl MockServer {
    pub fn start(port: u16, options: MockServerOptions) -> Result<Self, ServerError> {
        let bind = format!("127.0.0.1:{port}");
        let server = tiny_http::Server::http(&bind).map_err(|e| ServerError::Bind {
            addr: bind.clone(),
            reason: e.to_string(),
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| ServerError::Bind {
                addr: bind,
                reason: "not an IP listener".into(),
            })?;
        let server = Arc::new(server);
        let options = Arc::new(options);
        let handle = {
            let server = Arc::clone(&server);
            let options = Arc::clone(&options);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let options = Arc::clone(&options);
                    std::thread::spawn(move || handle_request(request, &options));
                }
            })
        };
        Ok(MockServer {
            server,
            addr,
            handle: Some(handle),
            options,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL suitable for [`EndpointConfig::base_url`].
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.options.faults.requests()
    }

    /// Serves until the process is killed.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn respond(request: tiny_http::Request, status: u16, body: String) {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
        .expect("static header");
    let response = tiny_http::Response::from_string(body)
        .with_status_code(status)
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::debug!("mock server could not respond: {e}");
    }
}

fn error_body(message: &str) -> String {
    serde_json::json!({ "error": { "message": message } }).to_string()
}

fn handle_request(mut request: tiny_http::Request, options: &MockServerOptions) {
    if request.method() != &tiny_http::Method::Post || !request.url().ends_with("/chat/completions")
    {
        return respond(request, 404, error_body("not found"));
    }
    if let Some(key) = &options.required_key {
        let expected = format!("Bearer {key}");
        let ok = request
            .headers()
            .iter()
            .any(|h| h.field.equiv("Authorization") && h.value.as_str() == expected);
        if !ok {
            return respond(request, 401, error_body("invalid credentials"));
        }
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        return respond(request, 400, error_body("unreadable body"));
    }
    let chat: ChatRequest = match serde_json::from_str(&body) {
        Ok(c) => c,
        Err(e) => return respond(request, 400, error_body(&e.to_string())),
    };
    let content = match options.faults.next() {
        Some(Fault::Status(status)) => return respond(request, status, error_body("injected")),
        // closing without a reply surfaces as a transport failure client-side
        Some(Fault::Network) => return drop(request),
        Some(Fault::NoVerdict) => "I cannot tell.".to_string(),
        None => match mock_complete(&chat.messages, &options.rule) {
            Ok(c) => c,
            Err(e) => return respond(request, 400, error_body(&e.to_string())),
        },
    };
    let reply = ChatResponse::single(&chat.model, content);
    respond(
        request,
        200,
        serde_json::to_string(&reply).expect("response serializes"),
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::CleanTranscript;
    use crate::cue::cue_coverage;
    use crate::prompt::{build_prompt, PromptMode, TemplateSet};

    fn bundle(mode: PromptMode, text: &str) -> PromptBundle {
        let t = CleanTranscript {
            participant_id: "p".into(),
            text: text.into(),
            ..Default::default()
        };
        let r = cue_coverage(&tokenize(text), &CueLexicon::builtin());
        build_prompt(mode, &t, Some(&r), &[], &TemplateSet::builtin()).unwrap()
    }

    fn fast() -> EndpointConfig {
        EndpointConfig {
            backoff_base_ms: 1,
            max_retries: 2,
            ..Default::default()
        }
    }

    const FIVE: &str =
        "the boy on the stool reaches the cookie jar while the sink overflows with water";

    #[test]
    fn parse_label_examples() {
        assert_eq!(
            parse_label("reasoning...\nDiagnosis: non-AD"),
            Some(Label::NonAd)
        );
        assert_eq!(
            parse_label("Diagnosis: AD because the description omits the sink"),
            Some(Label::Ad)
        );
        assert_eq!(parse_label("The patient may have dementia."), None);
        assert_eq!(parse_label("diagnosis: Non AD"), Some(Label::NonAd));
        assert_eq!(
            parse_label("Diagnosis: AD\nDiagnosis: non-AD"),
            Some(Label::NonAd)
        );
        assert_eq!(parse_label("Diagnosis: **AD**"), Some(Label::Ad));
        assert_eq!(parse_label("Diagnosis: adequate"), None);
    }

    #[test]
    fn mock_rule_boundaries() {
        let rule = MockRule::default();
        assert_eq!(rule.decide(6, 12), Label::NonAd);
        assert_eq!(rule.decide(5, 12), Label::Ad);
        assert_eq!(rule.decide(0, 12), Label::Ad);
        let six = "stool sink dish wash jar cookie";
        let out = mock_classify(&bundle(PromptMode::Cot, six), &rule).unwrap();
        assert!(out.ends_with("Diagnosis: non-AD"));
        let none = mock_classify(&bundle(PromptMode::Cot, "nothing here"), &rule).unwrap();
        assert!(none.ends_with("Diagnosis: AD"));
    }

    #[test]
    fn mock_retokenizes_zero_shot() {
        let nine = "the stool sink dishes washing jar cookies children mother window";
        let out = mock_classify(&bundle(PromptMode::ZeroShot, nine), &MockRule::default()).unwrap();
        assert!(out.contains("9/12"));
        assert_eq!(parse_label(&out), Some(Label::NonAd));
    }

    #[test]
    fn mock_rejects_malformed() {
        let msgs = vec![Message {
            role: Role::User,
            content: "hello".into(),
        }];
        assert!(matches!(
            mock_complete(&msgs, &MockRule::default()),
            Err(GatewayError::MalformedBundle)
        ));
    }

    #[test]
    fn classify_via_mock() {
        let t = MockTransport::new(MockRule::default());
        let b = bundle(PromptMode::Cot, FIVE);
        let (p, rec) = classify("p", &b, &fast(), &t).unwrap();
        assert_eq!(p.label, Label::Ad);
        assert_eq!(p.score, 1.0);
        assert_eq!(p.source, Source::Llm);
        assert_eq!(rec.attempt_count, 1);
        let (_, rec2) = classify("p", &b, &fast(), &t).unwrap();
        assert_eq!(rec.raw_response, rec2.raw_response);
    }

    #[test]
    fn retries_exhausted() {
        let t = MockTransport {
            rule: MockRule::default(),
            faults: FaultPlan::always(Fault::Status(500)),
        };
        match classify("p", &bundle(PromptMode::Cot, FIVE), &fast(), &t) {
            Err(GatewayError::Unreachable { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.faults.requests(), 3);
    }

    #[test]
    fn recovers_after_transient_faults() {
        let t = MockTransport {
            rule: MockRule::default(),
            faults: FaultPlan::first(vec![Fault::Network, Fault::Status(503)]),
        };
        let (_, rec) = classify("p", &bundle(PromptMode::Cot, FIVE), &fast(), &t).unwrap();
        assert_eq!(rec.attempt_count, 3);
    }

    #[test]
    fn unparseable_and_auth() {
        let t = MockTransport {
            rule: MockRule::default(),
            faults: FaultPlan::always(Fault::NoVerdict),
        };
        assert!(matches!(
            classify("p", &bundle(PromptMode::Cot, FIVE), &fast(), &t),
            Err(GatewayError::Unparseable { attempts: 3, .. })
        ));
        let t = MockTransport {
            rule: MockRule::default(),
            faults: FaultPlan::always(Fault::Status(401)),
        };
        assert!(matches!(
            classify("p", &bundle(PromptMode::Cot, FIVE), &fast(), &t),
            Err(GatewayError::AuthFailure { status: 401 })
        ));
        assert_eq!(t.faults.requests(), 1);
    }

    #[test]
    fn backoff_grows_and_is_jittered() {
        let cfg = EndpointConfig::default();
        for retry in 0..4 {
            let d = cfg.backoff(retry).as_secs_f64() * 1000.0;
            let full = 500.0 * 2f64.powi(retry as i32);
            assert!(d >= full / 2.0 - 1e-6 && d <= full + 1e-6);
        }
    }
}
