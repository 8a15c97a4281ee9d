//! Model backend gateway.
//!
//! Every model call goes through one [`Gateway`], which provides:
//!
//! - a *typed* surface (`caption`, `complete_chat`, `embed_text`,
//!   `embed_image`, `vqa`) over interchangeable transports (the
//!   deterministic [`MockBackend`], OpenAI-compatible HTTP, or test doubles);
//! - a content-addressed response cache (in-memory always, plus an optional
//!   on-disk tier shared between runs);
//! - single-flight deduplication, so identical concurrent requests cost one
//!   upstream call;
//! - per-backend concurrency limits and retry with exponential backoff on
//!   transport errors, 429 and 5xx — never on parse errors;
//! - a call ledger reporting network calls and cache hits per backend kind.
//!
//! Credentials are read from environment variables named in the backend
//! config file; they never appear in requests logged or cached.

pub mod cache;
pub mod config;
pub mod grid;
pub mod http;
pub mod mock;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Embedding, ImageRecord};
pub use cache::{CacheCorruption, CacheStats, DiskCache};
pub use config::{BackendConfig, BackendsFile};
pub use mock::MockBackend;

/// Prompt used for the captioning operation.
pub const CAPTION_PROMPT: &str = "Describe this image in detail.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    Caption,
    Chat,
    EmbedText,
    EmbedImage,
    Vqa,
    /// Image byte retrieval (HTTP download or mock synthesis).
    Fetch,
}

impl BackendKind {
    pub const ALL: [BackendKind; 6] = [
        BackendKind::Caption,
        BackendKind::Chat,
        BackendKind::EmbedText,
        BackendKind::EmbedImage,
        BackendKind::Vqa,
        BackendKind::Fetch,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BackendKind::Caption => "caption",
            BackendKind::Chat => "chat",
            BackendKind::EmbedText => "embed_text",
            BackendKind::EmbedImage => "embed_image",
            BackendKind::Vqa => "vqa",
            BackendKind::Fetch => "fetch",
        }
    }

    /// Which configured lane serves this kind (text and image embedding
    /// share the embedding backend).
    fn lane(&self) -> LaneKey {
        match self {
            BackendKind::Caption => LaneKey::Caption,
            BackendKind::Chat => LaneKey::Chat,
            BackendKind::EmbedText | BackendKind::EmbedImage => LaneKey::Embedding,
            BackendKind::Vqa => LaneKey::Vqa,
            BackendKind::Fetch => LaneKey::Fetch,
        }
    }

    fn index(&self) -> usize {
        match self {
            BackendKind::Caption => 0,
            BackendKind::Chat => 1,
            BackendKind::EmbedText => 2,
            BackendKind::EmbedImage => 3,
            BackendKind::Vqa => 4,
            BackendKind::Fetch => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LaneKey {
    Caption,
    Chat,
    Embedding,
    Vqa,
    Fetch,
}

impl LaneKey {
    fn as_str(&self) -> &'static str {
        match self {
            LaneKey::Caption => "caption",
            LaneKey::Chat => "chat",
            LaneKey::Embedding => "embedding",
            LaneKey::Vqa => "vqa",
            LaneKey::Fetch => "fetch",
        }
    }
}

/// Raw bytes travelling with a request (image payloads). Attachments are
/// referenced from the canonical payload by their hash; the bytes
/// themselves are not part of the cache key.
#[derive(Debug, Clone)]
pub struct Attachment {
    pub sha256: String,
    pub bytes: Arc<Vec<u8>>,
}

impl Attachment {
    pub fn new(bytes: Arc<Vec<u8>>) -> Self {
        Attachment {
            sha256: hex::encode(Sha256::digest(bytes.as_slice())),
            bytes,
        }
    }
}

/// One request as seen by transports and the cache.
#[derive(Debug, Clone)]
pub struct GatewayRequest {
    pub kind: BackendKind,
    pub model_id: String,
    /// Canonicalizable request body. Image bytes appear only as their
    /// content hash; the bytes ride along in `attachments`.
    pub payload: Value,
    pub attachments: Vec<Attachment>,
}

impl GatewayRequest {
    /// 256-bit content address: hash of backend kind, model id, and the
    /// canonical (sorted-key) payload. A pure function of the request.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.as_str().as_bytes());
        h.update([0x1f]);
        h.update(self.model_id.as_bytes());
        h.update([0x1f]);
        h.update(canonical_json(&self.payload).as_bytes());
        hex::encode(h.finalize())
    }
}

/// Serialize JSON with object keys sorted recursively and no extra
/// whitespace: a canonical form independent of construction order.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_canonical(&map[*k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        leaf => out.push_str(&serde_json::to_string(leaf).expect("leaf serializes")),
    }
}

/// Transport failure. `retryable` marks transport-level trouble (connect,
/// timeout, 429, 5xx); everything else fails fast.
#[derive(Debug)]
pub struct TransportError {
    pub retryable: bool,
    pub message: String,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        TransportError { retryable: true, message: message.into() }
    }
    pub fn fatal(message: impl Into<String>) -> Self {
        TransportError { retryable: false, message: message.into() }
    }
}

///// A backend implementation: executes one canonical request, returning
/// canonical response bytes (plain text for chat-like kinds, a JSON array
/// of floats for embeddings, raw bytes for fetches).
pub trait Transport: Send + Sync {
    fn execute(&self, request: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError>;
    /// Human-readable target for error messages.
    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, base_delay: Duration::from_millis(100) }
    }
}

/// Counting semaphore bounding in-flight requests per lane.
struct Limiter {
    max: usize,
    count: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter { max: max.max(1), count: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> LimiterPermit<'_> {
        let mut count = self.count.lock().unwrap();
        while *count >= self.max {
            count = self.cv.wait(count).unwrap();
        }
        *count += 1;
        LimiterPermit(self)
    }
}

struct LimiterPermit<'a>(&'a Limiter);

impl Drop for LimiterPermit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

struct Lane {
    transport: Arc<dyn Transport>,
    model_id: String,
    limiter: Limiter,
    retry: RetryPolicy,
}

/// Per-kind call counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CallCounts {
    pub network: u64,
    pub cache_hits: u64,
}

#[derive(Default)]
struct LedgerCell {
    network: AtomicU64,
    cache_hits: AtomicU64,
}

pub struct Gateway {
    lanes: HashMap<LaneKey, Lane>,
    memory: Mutex<HashMap<String, Arc<Vec<u8>>>>,
    disk: Option<DiskCache>,
    in_flight: Mutex<HashSet<String>>,
    flight_cv: Condvar,
    ledger: [LedgerCell; 6],
}

impl Gateway {
    /// Gateway backed entirely by the deterministic mock.
    pub fn mock(mock: Arc<MockBackend>) -> Gateway {
        Self::mock_with_cache(mock, None).expect("no cache dir, cannot fail")
    }

    pub fn mock_with_cache(mock: Arc<MockBackend>, cache_dir: Option<&Path>) -> Result<Gateway> {
        let model_id = mock.fingerprint();
        let mut lanes = HashMap::new();
        for key in [LaneKey::Caption, LaneKey::Chat, LaneKey::Embedding, LaneKey::Vqa, LaneKey::Fetch] {
            lanes.insert(
                key,
                Lane {
                    transport: mock.clone() as Arc<dyn Transport>,
                    model_id: model_id.clone(),
                    limiter: Limiter::new(8),
                    retry: RetryPolicy { max_retries: 0, base_delay: Duration::ZERO },
                },
            );
        }
        Self::build(lanes, cache_dir)
    }

    /// Gateway over OpenAI-compatible HTTP backends from a config file.
    /// Only the configured sections become usable lanes; a plain HTTP
    /// fetcher is always installed for downloading image sources.
    pub fn from_backends(cfgs: &BackendsFile, cache_dir: Option<&Path>) -> Result<Gateway> {
        let mut lanes = HashMap::new();
        for (key, cfg) in [
            (LaneKey::Caption, &cfgs.caption),
            (LaneKey::Chat, &cfgs.chat),
            (LaneKey::Embedding, &cfgs.embedding),
            (LaneKey::Vqa, &cfgs.vqa),
        ] {
            if let Some(cfg) = cfg {
                lanes.insert(
                    key,
                    Lane {
                        transport: Arc::new(http::HttpTransport::new(cfg)?),
                        model_id: cfg.model_id.clone(),
                        limiter: Limiter::new(cfg.max_concurrency),
                        retry: RetryPolicy {
                            max_retries: cfg.max_retries,
                            base_delay: Duration::from_millis(100),
                        },
                    },
                );
            }
        }
        lanes.insert(
            LaneKey::Fetch,
            Lane {
                transport: Arc::new(http::HttpFetchTransport::new(30.0)?),
                model_id: "fetch".into(),
                limiter: Limiter::new(8),
                retry: RetryPolicy::default(),
            },
        );
        Self::build(lanes, cache_dir)
    }

    /// Single custom transport serving every kind — for tests and doubles.
    pub fn single_transport(
        transport: Arc<dyn Transport>,
        model_id: &str,
        max_concurrency: usize,
        retry: RetryPolicy,
        cache_dir: Option<&Path>,
    ) -> Result<Gateway> {
        let mut lanes = HashMap::new();
        for key in [LaneKey::Caption, LaneKey::Chat, LaneKey::Embedding, LaneKey::Vqa, LaneKey::Fetch] {
            lanes.insert(
                key,
                Lane {
                    transport: transport.clone(),
                    model_id: model_id.to_string(),
                    limiter: Limiter::new(max_concurrency),
                    retry,
                },
            );
        }
        Self::build(lanes, cache_dir)
    }

    fn build(lanes: HashMap<LaneKey, Lane>, cache_dir: Option<&Path>) -> Result<Gateway> {
        let disk = match cache_dir {
            Some(dir) => Some(DiskCache::open(dir)?),
            None => None,
        };
        Ok(Gateway {
            lanes,
            memory: Mutex::new(HashMap::new()),
            disk,
            in_flight: Mutex::new(HashSet::new()),
            flight_cv: Condvar::new(),
            ledger: Default::default(),
        })
    }

    fn lane(&self, kind: BackendKind) -> Result<&Lane> {
        self.lanes.get(&kind.lane()).ok_or_else(|| {
            Error::Config(format!(
                "no [{}] backend configured (required for {})",
                kind.lane().as_str(),
                kind.as_str()
            ))
        })
    }

    /// Model id that requests of this kind will carry.
    pub fn model_id(&self, kind: BackendKind) -> Result<&str> {
        Ok(self.lane(kind)?.model_id.as_str())
    }

    /// Snapshot of per-kind call counts (only kinds that saw traffic).
    pub fn ledger(&self) -> BTreeMap<String, CallCounts> {
        let kinds = [
            BackendKind::Caption,
            BackendKind::Chat,
            BackendKind::EmbedText,
            BackendKind::EmbedImage,
            BackendKind::Vqa,
            BackendKind::Fetch,
        ];
        let mut out = BTreeMap::new();
        for kind in kinds {
            let cell = &self.ledger[kind.index()];
            let counts = CallCounts {
                network: cell.network.load(Ordering::Relaxed),
                cache_hits: cell.cache_hits.load(Ordering::Relaxed),
            };
            if counts != CallCounts::default() {
                out.insert(kind.as_str().to_string(), counts);
            }
        }
        out
    }

    fn cache_get(&self, key: &str) -> Result<Option<Arc<Vec<u8>>>> {
        if let Some(hit) = self.memory.lock().unwrap().get(key) {
            return Ok(Some(hit.clone()));
        }
        if let Some(disk) = &self.disk {
            if let Some(bytes) = disk.get(key)? {
                let arc = Arc::new(bytes);
                self.memory.lock().unwrap().insert(key.to_string(), arc.clone());
                return Ok(Some(arc));
            }
        }
        Ok(None)
    }

    fn cache_put(&self, key: &str, value: Arc<Vec<u8>>) -> Result<()> {
        if let Some(disk) = &self.disk {
            disk.put(key, &value)?;
        }
        self.memory.lock().unwrap().insert(key.to_string(), value);
        Ok(())
    }

    /// Execute a request through cache, single-flight, limiter and retry.
    pub fn execute(&self, request: &GatewayRequest) -> Result<Arc<Vec<u8>>> {
        let key = request.cache_key();
        loop {
            if let Some(hit) = self.cache_get(&key)? {
                self.ledger[request.kind.index()].cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
            // Become the executor for this key, or wait for the current one.
            let mut flights = self.in_flight.lock().unwrap();
            if !flights.contains(&key) {
                flights.insert(key.clone());
                break;
            }
            let _unused = self.flight_cv.wait(flights).unwrap();
            // Re-check the cache: the executor may have filled it (or failed,
            // in which case we take over).
        }

        let _guard = FlightGuard { gateway: self, key: &key };
        let bytes = self.execute_uncached(request)?;
        let arc = Arc::new(bytes);
        self.cache_put(&key, arc.clone())?;
        Ok(arc)
    }

    fn execute_uncached(&self, request: &GatewayRequest) -> Result<Vec<u8>> {
        let lane = self.lane(request.kind)?;
        let cell = &self.ledger[request.kind.index()];
        let mut attempt: u32 = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = lane.limiter.acquire();
                cell.network.fetch_add(1, Ordering::Relaxed);
                lane.transport.execute(request)
            };
            match outcome {
                Ok(bytes) => return Ok(bytes),
                Err(e) if e.retryable && attempt <= lane.retry.max_retries => {
                    let delay = lane.retry.base_delay * 2u32.saturating_pow(attempt - 1);
                    tracing::warn!(
                        kind = request.kind.as_str(),
                        attempt,
                        delay_ms = delay.as_millis() as u64,
                        "retryable backend failure: {}",
                        e.message
                    );
                    std::thread::sleep(delay);
                }
                Err(e) => {
                    return Err(Error::Backend {
                        kind: request.kind.as_str(),
                        attempts: attempt,
                        message: format!("{} ({})", e.message, lane.transport.describe()),
                    })
                }
            }
        }
    }

    // ---- typed operations ----

    /// Caption one image.
    pub fn caption(&self, record: &ImageRecord) -> Result<String> {
        let bytes = self.fetch_image(record)?;
        let att = Attachment::new(bytes);
        let request = GatewayRequest {
            kind: BackendKind::Caption,
            model_id: self.model_id(BackendKind::Caption)?.to_string(),
            payload: json!({ "prompt": CAPTION_PROMPT, "image": att.sha256 }),
            attachments: vec![att],
        };
        let raw = self.execute(&request)?;
        let text = utf8(&raw)?.trim().to_string();
        if text.is_empty() {
            return Err(Error::EmptyOutput(format!("caption for image {:?}", record.id)));
        }
        Ok(text)
    }

    /// Free-form chat completion; messages may carry PNG attachments.
    pub fn complete_chat(&self, messages: &[ChatMessage]) -> Result<String> {
        self.complete_chat_tagged(messages, None)
    }

    /// Chat completion with an optional cache discriminator. A retry after
    /// a bad response must not be answered from cache, so callers tag the
    /// retry request; transports ignore the tag.
    pub fn complete_chat_tagged(
        &self,
        messages: &[ChatMessage],
        cache_tag: Option<&str>,
    ) -> Result<String> {
        let mut attachments = Vec::new();
        let rendered: Vec<Value> = messages
            .iter()
            .map(|m| {
                let mut obj = json!({ "role": m.role.as_str(), "content": m.content });
                if let Some(png) = &m.image_png {
                    let att = Attachment::new(png.clone());
                    obj["image"] = Value::String(att.sha256.clone());
                    attachments.push(att);
                }
                obj
            })
            .collect();
        let mut payload = json!({ "messages": rendered });
        if let Some(tag) = cache_tag {
            payload["retry"] = Value::String(tag.to_string());
        }
        let request = GatewayRequest {
            kind: BackendKind::Chat,
            model_id: self.model_id(BackendKind::Chat)?.to_string(),
            payload,
            attachments,
        };
        let raw = self.execute(&request)?;
        let text = utf8(&raw)?.trim().to_string();
        if text.is_empty() {
            return Err(Error::EmptyOutput("chat completion".into()));
        }
        Ok(text)
    }

    /// Unit-norm embedding of a text.
    pub fn embed_text(&self, text: &str) -> Result<Embedding> {
        let request = GatewayRequest {
            kind: BackendKind::EmbedText,
            model_id: self.model_id(BackendKind::EmbedText)?.to_string(),
            payload: json!({ "input": text }),
            attachments: vec![],
        };
        let raw = self.execute(&request)?;
        parse_embedding(&raw)
    }

    /// Unit-norm embedding of an image.
    pub fn embed_image(&self, record: &ImageRecord) -> Result<Embedding> {
        let bytes = self.fetch_image(record)?;
        let att = Attachment::new(bytes);
        let request = GatewayRequest {
            kind: BackendKind::EmbedImage,
            model_id: self.model_id(BackendKind::EmbedImage)?.to_string(),
            payload: json!({ "image": att.sha256 }),
            attachments: vec![att],
        };
        let raw = self.execute(&request)?;
        parse_embedding(&raw)
    }

    /// Yes/no visual question. The model must answer with a leading yes or
    /// no; anything else is a parse error, never a guess.
    pub fn vqa(&self, record: &ImageRecord, question: &str) -> Result<bool> {
        let bytes = self.fetch_image(record)?;
        let att = Attachment::new(bytes);
        let request = GatewayRequest {
            kind: BackendKind::Vqa,
            model_id: self.model_id(BackendKind::Vqa)?.to_string(),
            payload: json!({ "question": question, "image": att.sha256 }),
            attachments: vec![att],
        };
        let raw = self.execute(&request)?;
        parse_yes_no(utf8(&raw)?)
    }

    /// Resolve an image source to bytes: local file, `mock://` synthesis,
    /// or HTTP download (cached like any other backend response).
    pub fn fetch_image(&self, record: &ImageRecord) -> Result<Arc<Vec<u8>>> {
        let src = record.source.as_str();
        if src.starts_with("mock://") || src.starts_with("http://") || src.starts_with("https://") {
            let request = GatewayRequest {
                kind: BackendKind::Fetch,
                model_id: self.model_id(BackendKind::Fetch)?.to_string(),
                payload: json!({ "source": src }),
                attachments: vec![],
            };
            return self.execute(&request).map_err(|e| match e {
                Error::Backend { message, .. } => Error::Image {
                    id: record.id.clone(),
                    message,
                },
                other => other,
            });
        }
        match std::fs::read(src) {
            Ok(bytes) => Ok(Arc::new(bytes)),
            Err(e) => Err(Error::Image {
                id: record.id.clone(),
                message: format!("cannot read {src}: {e}"),
            }),
        }
    }
}

struct FlightGuard<'a> {
    gateway: &'a Gateway,
    key: &'a str,
}

impl Drop for FlightGuard<'_> {
    fn drop(&mut self) {
        self.gateway.in_flight.lock().unwrap().remove(self.key);
        self.gateway.flight_cv.notify_all();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub image_png: Option<Arc<Vec<u8>>>,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into(), image_png: None }
    }

    pub fn user_with_image(content: impl Into<String>, png: Arc<Vec<u8>>) -> Self {
        ChatMessage { role: Role::User, content: content.into(), image_png: Some(png) }
    }
}

fn utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|_| Error::ResponseParse {
        message: "response is not UTF-8".into(),
        raw: String::from_utf8_lossy(&bytes[..bytes.len().min(80)]).into_owned(),
    })
}

fn parse_embedding(raw: &[u8]) -> Result<Embedding> {
    let values: Vec<f64> = serde_json::from_slice(raw).map_err(|e| Error::ResponseParse {
        message: format!("embedding payload is not a float array: {e}"),
        raw: String::from_utf8_lossy(&raw[..raw.len().min(80)]).into_owned(),
    })?;
    Embedding::normalized(values)
        .map_err(|e| Error::ResponseParse { message: e.to_string(), raw: String::new() })
}

///// Parse a yes/no answer: case-insensitive leading "yes" or "no" after
/// stripping surrounding punctuation. Anything else is a parse error.
pub fn parse_yes_no(answer: &str) -> Result<bool> {
    let trimmed = answer.trim().trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = trimmed
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(Error::ResponseParse {
            message: "expected a leading yes or no".into(),
            raw: answer.chars().take(80).collect(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    #[test]
    fn canonical_json_sorts_keys_recursively() {
        let v = json!({"b": {"z": 1, "a": [true, null, "x\"y"]}, "a": 2.5});
        assert_eq!(
            canonical_json(&v),
            r#"{"a":2.5,"b":{"a":[true,null,"x\"y"],"z":1}}"#
        );
    }

    #[test]
    fn cache_key_ignores_construction_order_but_not_content() {
        let r1 = GatewayRequest {
            kind: BackendKind::Chat,
            model_id: "m".into(),
            payload: json!({"x": 1, "y": 2}),
            attachments: vec![],
        };
        let mut reordered = serde_json::Map::new();
        reordered.insert("y".into(), json!(2));
        reordered.insert("x".into(), json!(1));
        let r2 = GatewayRequest { payload: Value::Object(reordered), ..r1.clone() };
        assert_eq!(r1.cache_key(), r2.cache_key());

        let other_model = GatewayRequest { model_id: "m2".into(), ..r1.clone() };
        assert_ne!(r1.cache_key(), other_model.cache_key());
        let other_kind = GatewayRequest { kind: BackendKind::Caption, ..r1.clone() };
        assert_ne!(r1.cache_key(), other_kind.cache_key());
        let other_payload = GatewayRequest { payload: json!({"x": 1, "y": 3}), ..r1.clone() };
        assert_ne!(r1.cache_key(), other_payload.cache_key());
    }

    #[test]
    fn parse_yes_no_cases() {
        assert!(parse_yes_no("Yes").unwrap());
        assert!(parse_yes_no("  yes, it does.").unwrap());
        assert!(parse_yes_no("\"YES\"").unwrap());
        assert!(!parse_yes_no("No.").unwrap());
        assert!(!parse_yes_no("no way").unwrap());
        assert!(parse_yes_no("maybe").is_err());
        assert!(parse_yes_no("yessir").is_err());
        assert!(parse_yes_no("the answer is yes").is_err());
        assert!(parse_yes_no("").is_err());
    }

    /// Double that counts executions and answers with a fixed caption.
    struct CountingTransport {
        calls: AtomicUsize,
    }

    impl Transport for CountingTransport {
        fn execute(&self, req: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match req.kind {
                BackendKind::Fetch => Ok(b"fakeimagebytes".to_vec()),
                _ => Ok(b"a response".to_vec()),
            }
        }
        fn describe(&self) -> String {
            "counting double".into()
        }
    }

    fn test_record() -> ImageRecord {
        ImageRecord::new("img-1", "http://example.invalid/x.png")
    }

    #[test]
    fn identical_requests_hit_network_once() {
        let transport = Arc::new(CountingTransport { calls: AtomicUsize::new(0) });
        let gw = Gateway::single_transport(
            transport.clone(),
            "m",
            4,
            RetryPolicy { max_retries: 0, base_delay: Duration::ZERO },
            None,
        )
        .unwrap();
        let rec = test_record();
        for _ in 0..5 {
            assert_eq!(gw.caption(&rec).unwrap(), "a response");
        }
        // One fetch + one caption reach the transport; the rest are hits.
        assert_eq!(transport.calls.load(Ordering::SeqCst), 2);
        let ledger = gw.ledger();
        assert_eq!(ledger["caption"], CallCounts { network: 1, cache_hits: 4 });
        assert_eq!(ledger["fetch"], CallCounts { network: 1, cache_hits: 4 });
    }

    #[test]
    fn warm_disk_cache_serves_new_gateway_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let transport = Arc::new(CountingTransport { calls: AtomicUsize::new(0) });
        let mk = |t: Arc<CountingTransport>| {
            Gateway::single_transport(
                t,
                "m",
                4,
                RetryPolicy { max_retries: 0, base_delay: Duration::ZERO },
                Some(dir.path()),
            )
            .unwrap()
        };
        let rec = test_record();
        let first = mk(transport.clone());
        first.caption(&rec).unwrap();
        assert_eq!(transport.calls.load(Ordering::SeqCst), 2);

        let second = mk(transport.clone());
        assert_eq!(second.caption(&rec).unwrap(), "a response");
        assert_eq!(transport.calls.load(Ordering::SeqCst), 2, "disk cache not used");
        assert_eq!(second.ledger()["caption"].network, 0);
    }

    /// Double that fails with retryable errors a fixed number of times.
    struct FlakyTransport {
        failures_left: Mutex<u32>,
        calls: AtomicUsize,
    }

    impl Transport for FlakyTransport {
        fn execute(&self, _req: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let mut left = self.failures_left.lock().unwrap();
            if *left > 0 {
                *left -= 1;
                return Err(TransportError::retryable("simulated 503"));
            }
            Ok(b"recovered".to_vec())
        }
        fn describe(&self) -> String {
            "flaky double".into()
        }
    }

    #[test]
    fn retryable_failures_are_retried_with_backoff() {
        let transport = Arc::new(FlakyTransport { failures_left: Mutex::new(2), calls: AtomicUsize::new(0) });
        let gw = Gateway::single_transport(
            transport.clone(),
            "m",
            1,
            RetryPolicy { max_retries: 2, base_delay: Duration::from_millis(1) },
            None,
        )
        .unwrap();
        let out = gw.complete_chat(&[ChatMessage::user("hi")]).unwrap();
        assert_eq!(out, "recovered");
        assert_eq!(transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_exhausted_is_a_backend_error() {
        let transport = Arc::new(FlakyTransport { failures_left: Mutex::new(99), calls: AtomicUsize::new(0) });
        let gw = Gateway::single_transport(
            transport.clone(),
            "m",
            1,
            RetryPolicy { max_retries: 1, base_delay: Duration::from_millis(1) },
            None,
        )
        .unwrap();
        let err = gw.complete_chat(&[ChatMessage::user("hi")]).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("2 attempt"), "{err}");
        assert_eq!(transport.calls.load(Ordering::SeqCst), 2);
    }

    /// Double that always fails fatally.
    struct FatalTransport {
        calls: AtomicUsize,
    }

    impl Transport for FatalTransport {
        fn execute(&self, _req: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::fatal("401 unauthorized"))
        }
        fn describe(&self) -> String {
            "fatal double".into()
        }
    }

    #[test]
    fn fatal_errors_are_not_retried() {
        let transport = Arc::new(FatalTransport { calls: AtomicUsize::new(0) });
        let gw = Gateway::single_transport(
            transport.clone(),
            "m",
            1,
            RetryPolicy { max_retries: 5, base_delay: Duration::from_millis(1) },
            None,
        )
        .unwrap();
        let err = gw.complete_chat(&[ChatMessage::user("hi")]).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert_eq!(transport.calls.load(Ordering::SeqCst), 1);
    }

    /// Double measuring in-flight concurrency.
    struct ConcurrencyProbe {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Transport for ConcurrencyProbe {
        fn execute(&self, req: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(15));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(format!("echo:{}", canonical_json(&req.payload)).into_bytes())
        }
        fn describe(&self) -> String {
            "probe".into()
        }
    }

    #[test]
    fn in_flight_requests_never_exceed_the_limit() {
        let probe = Arc::new(ConcurrencyProbe { current: AtomicUsize::new(0), peak: AtomicUsize::new(0) });
        let gw = Arc::new(
            Gateway::single_transport(
                probe.clone(),
                "m",
                3,
                RetryPolicy { max_retries: 0, base_delay: Duration::ZERO },
                None,
            )
            .unwrap(),
        );
        std::thread::scope(|s| {
            for i in 0..16 {
                let gw = gw.clone();
                s.spawn(move || {
                    gw.complete_chat(&[ChatMessage::user(format!("msg {i}"))]).unwrap();
                });
            }
        });
        assert!(probe.peak.load(Ordering::SeqCst) <= 3, "peak {}", probe.peak.load(Ordering::SeqCst));
        assert_eq!(gw.ledger()["chat"].network, 16);
    }

    /// Slow double for observing single-flight deduplication.
    struct SlowTransport {
        calls: AtomicUsize,
    }

    impl Transport for SlowTransport {
        fn execute(&self, _req: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(40));
            Ok(b"slow".to_vec())
        }
        fn describe(&self) -> String {
            "slow double".into()
        }
    }

    #[test]
    fn concurrent_identical_requests_collapse_to_one_call() {
        let transport = Arc::new(SlowTransport { calls: AtomicUsize::new(0) });
        let gw = Arc::new(
            Gateway::single_transport(
                transport.clone(),
                "m",
                8,
                RetryPolicy { max_retries: 0, base_delay: Duration::ZERO },
                None,
            )
            .unwrap(),
        );
        std::thread::scope(|s| {
            for _ in 0..8 {
                let gw = gw.clone();
                s.spawn(move || {
                    gw.complete_chat(&[ChatMessage::user("same message")]).unwrap();
                });
            }
        });
        assert_eq!(transport.calls.load(Ordering::SeqCst), 1);
        let counts = gw.ledger()["chat"];
        assert_eq!(counts.network, 1);
        assert_eq!(counts.cache_hits, 7);
    }

    /// Scripted double answering with fixed text.
    struct ScriptedTransport(&'static str);

    impl Transport for ScriptedTransport {
        fn execute(&self, _req: &GatewayRequest) -> std::result::Result<Vec<u8>, TransportError> {
            Ok(self.0.as_bytes().to_vec())
        }
        fn describe(&self) -> String {
            "scripted".into()
        }
    }

    #[test]
    fn vqa_refuses_to_guess_on_unparseable_answer() {
        let gw = Gateway::single_transport(
            Arc::new(ScriptedTransport("It is hard to tell.")),
            "m",
            1,
            RetryPolicy::default(),
            None,
        )
        .unwrap();
        let err = gw.vqa(&test_record(), "Does this image contain cats?").unwrap_err();
        match err {
            Error::ResponseParse { ref raw, .. } => assert!(raw.contains("hard to tell")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_caption_is_an_empty_output_error() {
        let gw = Gateway::single_transport(
            Arc::new(ScriptedTransport("   ")),
            "m",
            1,
            RetryPolicy::default(),
            None,
        )
        .unwrap();
        let err = gw.caption(&test_record()).unwrap_err();
        assert!(matches!(err, Error::EmptyOutput(_)), "{err:?}");
    }

    #[test]
    fn file_sources_read_from_disk_and_missing_files_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        std::fs::write(&path, b"png-ish").unwrap();
        let gw = Gateway::single_transport(
            Arc::new(ScriptedTransport("unused")),
            "m",
            1,
            RetryPolicy::default(),
            None,
        )
        .unwrap();
        let ok = ImageRecord::new("ok", path.to_str().unwrap());
        assert_eq!(gw.fetch_image(&ok).unwrap().as_slice(), b"png-ish");
        let missing = ImageRecord::new("gone", dir.path().join("nope.png").to_str().unwrap());
        let err = gw.fetch_image(&missing).unwrap_err();
        assert!(err.to_string().contains("gone"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }
}
