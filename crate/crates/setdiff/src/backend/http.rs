//! HTTP transports for OpenAI-style chat-completions and embeddings APIs.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::config::BackendConfig;
use super::{Attachment, BackendKind, GatewayRequest, Transport, TransportError};
use crate::{Error, Result};

type TResult<T> = std::result::Result<T, TransportError>;

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    bearer: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &BackendConfig) -> Result<Self> {
        let bearer = match &cfg.auth_env_var {
            Some(var) if !var.is_empty() => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!(
                    "auth_env_var names {var:?} but that environment variable is not set"
                ))
            })?),
            _ => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpTransport {
            client,
            endpoint: cfg.endpoint.trim_end_matches('/').to_string(),
            bearer,
        })
    }

    fn post(&self, path: &str, body: &Value) -> TResult<Value> {
        let url = format!("{}{path}", self.endpoint);
        let mut req = self.client.post(&url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| TransportError::retryable(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TransportError::retryable(format!("read body from {url}: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::retryable(format!(
                "{url} returned {status}: {}",
                snippet(&text)
            )));
        }
        if !status.is_success() {
            return Err(TransportError::fatal(format!(
                "{url} returned {status}: {}",
                snippet(&text)
            )));
        }
        serde_json::from_str(&text)
            .map_err(|e| TransportError::fatal(format!("{url} returned unparseable JSON: {e}")))
    }

    fn chat_body(&self, request: &GatewayRequest) -> TResult<Value> {
        let messages = match request.kind {
            BackendKind::Caption => {
                let prompt = str_field(request, "prompt")?;
                vec![user_with_image(prompt, request.attachments.first())?]
            }
            BackendKind::Vqa => {
                let question = str_field(request, "question")?;
                vec![user_with_image(question, request.attachments.first())?]
            }
            BackendKind::Chat => {
                let raw = request.payload["messages"]
                    .as_array()
                    .ok_or_else(|| TransportError::fatal("chat payload has no messages"))?;
                let mut messages = Vec::with_capacity(raw.len());
                for m in raw {
                    let role = m["role"].as_str().unwrap_or("user");
                    let content = m["content"].as_str().unwrap_or_default();
                    if let Some(sha) = m["image"].as_str() {
                        let att = request
                            .attachments
                            .iter()
                            .find(|a| a.sha256 == sha)
                            .ok_or_else(|| {
                                TransportError::fatal("message references a missing attachment")
                            })?;
                        messages.push(user_with_image(content, Some(att))?);
                    } else {
                        messages.push(json!({ "role": role, "content": content }));
                    }
                }
                messages
            }
            _ => return Err(TransportError::fatal("not a chat kind")),
        };
        Ok(json!({ "model": request.model_id, "messages": messages }))
    }

    fn embeddings_body(&self, request: &GatewayRequest) -> TResult<Value> {
        let input = match request.kind {
            BackendKind::EmbedText => str_field(request, "input")?.to_string(),
            BackendKind::EmbedImage => {
                data_uri(request.attachments.first().ok_or_else(|| {
                    TransportError::fatal("embed-image request carries no attachment")
                })?)
            }
            _ => return Err(TransportError::fatal("not an embedding kind")),
        };
        Ok(json!({ "model": request.model_id, "input": [input] }))
    }
}

impl Transport for HttpTransport {
    fn execute(&self, request: &GatewayRequest) -> TResult<Vec<u8>> {
        match request.kind {
            BackendKind::Caption | BackendKind::Chat | BackendKind::Vqa => {
                let body = self.chat_body(request)?;
                let resp = self.post("/chat/completions", &body)?;
                let content = resp["choices"][0]["message"]["content"]
                    .as_str()
                    .ok_or_else(|| {
                        TransportError::fatal("response has no choices[0].message.content")
                    })?;
                Ok(content.as_bytes().to_vec())
            }
            BackendKind::EmbedText | BackendKind::EmbedImage => {
                let body = self.embeddings_body(request)?;
                let resp = self.post("/embeddings", &body)?;
                let vector = resp["data"][0]["embedding"]
                    .as_array()
                    .ok_or_else(|| TransportError::fatal("response has no data[0].embedding"))?;
                let floats: Option<Vec<f64>> = vector.iter().map(Value::as_f64).collect();
                let floats =
                    floats.ok_or_else(|| TransportError::fatal("embedding is not numeric"))?;
                Ok(serde_json::to_vec(&floats).expect("vector serializes"))
            }
            BackendKind::Fetch => Err(TransportError::fatal(
                "fetch requests belong to the fetch transport",
            )),
        }
    }

    fn describe(&self) -> String {
        format!("http backend at {}", self.endpoint)
    }
}

/// Plain GET transport for downloading image bytes.
pub struct HttpFetchTransport {
    client: reqwest::blocking::Client,
}

impl HttpFetchTransport {
    pub fn new(timeout: f64) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpFetchTransport { client })
    }
}

impl Transport for HttpFetchTransport {
    fn execute(&self, request: &GatewayRequest) -> TResult<Vec<u8>> {
        let url = request.payload["source"]
            .as_str()
            .ok_or_else(|| TransportError::fatal("fetch payload has no source"))?;
        let resp = self
            .client
            .get(url)
            .send()
            .map_err(|e| TransportError::retryable(format!("GET {url}: {e}")))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::retryable(format!("GET {url} returned {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::fatal(format!("GET {url} returned {status}")));
        }
        let bytes = resp
            .bytes()
            .map_err(|e| TransportError::retryable(format!("read body from {url}: {e}")))?;
        Ok(bytes.to_vec())
    }

    fn describe(&self) -> String {
        "http fetcher".into()
    }
}

fn str_field<'a>(request: &'a GatewayRequest, key: &str) -> TResult<&'a str> {
    request.payload[key]
        .as_str()
        .ok_or_else(|| TransportError::fatal(format!("payload field {key:?} missing")))
}

fn user_with_image(text: &str, att: Option<&Attachment>) -> TResult<Value> {
    let att = att.ok_or_else(|| TransportError::fatal("request carries no image attachment"))?;
    Ok(json!({
        "role": "user",
        "content": [
            { "type": "text", "text": text },
            { "type": "image_url", "image_url": { "url": data_uri(att) } },
        ],
    }))
}

fn data_uri(att: &Attachment) -> String {
    let mime = match att.bytes.as_slice() {
        [0x89, b'P', b'N', b'G', ..] => "image/png",
        [0xFF, 0xD8, ..] => "image/jpeg",
        _ => "application/octet-stream",
    };
    format!(
        "data:{mime};base64,{}",
        base64::engine::general_purpose::STANDARD.encode(att.bytes.as_slice())
    )
}

fn snippet(text: &str) -> &str {
    let end = text
        .char_indices()
        .nth(200)
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    &text[..end]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn att(bytes: &[u8]) -> Attachment {
        Attachment::new(Arc::new(bytes.to_vec()))
    }

    #[test]
    fn data_uri_sniffs_the_image_format() {
        assert!(data_uri(&att(&[0x89, b'P', b'N', b'G', 13, 10])).starts_with("data:image/png;"));
        assert!(data_uri(&att(&[0xFF, 0xD8, 0xFF])).starts_with("data:image/jpeg;"));
        assert!(data_uri(&att(b"junk")).starts_with("data:application/octet-stream;"));
    }

    #[test]
    fn missing_auth_variable_is_a_config_error() {
        let cfg = BackendConfig {
            endpoint: "http://localhost:1".into(),
            model_id: "m".into(),
            auth_env_var: Some("SETDIFF_TEST_SURELY_UNSET_VAR".into()),
            ..BackendConfig::default()
        };
        let err = match HttpTransport::new(&cfg) {
            Err(e) => e,
            Ok(_) => panic!("expected a config error"),
        };
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn chat_body_inlines_attachments_per_message() {
        let cfg = BackendConfig {
            endpoint: "http://localhost:1".into(),
            model_id: "m".into(),
            ..BackendConfig::default()
        };
        let t = HttpTransport::new(&cfg).unwrap();
        let attachment = att(&[0x89, b'P', b'N', b'G']);
        let sha = attachment.sha256.clone();
        let request = GatewayRequest {
            kind: BackendKind::Chat,
            model_id: "m".into(),
            payload: serde_json::json!({
                "messages": [
                    { "role": "user", "content": "look at this", "image": sha },
                    { "role": "user", "content": "plain follow-up" },
                ],
            }),
            attachments: vec![attachment],
        };
        let body = t.chat_body(&request).unwrap();
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 2);
        assert!(msgs[0]["content"][1]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/png;base64,"));
        assert_eq!(msgs[1]["content"], "plain follow-up");
    }
}
