use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use mimic_core::taskgen::QueryInstance;

use crate::{EndpointConfig, ErrorClass};

/// Resolves image bytes to data URIs, with a per-run cache so an image
/// shared by many queries is encoded once.
pub(crate) struct ImageResolver<'a> {
    images_root: Option<&'a Path>,
    client: reqwest::blocking::Client,
    cache: Mutex<HashMap<String, String>>,
}

impl<'a> ImageResolver<'a> {
    pub(crate) fn new(images_root: Option<&'a Path>, timeout: Duration) -> Self {
        ImageResolver {
            images_root,
            client: reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .expect("client builds"),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub(crate) fn data_uri(&self, source_uri: &str) -> Result<String, String> {
        if let Some(hit) = self.cache.lock().unwrap().get(source_uri) {
            return Ok(hit.clone());
        }
        let bytes = if source_uri.starts_with("http://") || source_uri.starts_with("https://") {
            let response = self
                .client
                .get(source_uri)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| format!("fetch {source_uri}: {e}"))?;
            response
                .bytes()
                .map_err(|e| format!("fetch {source_uri}: {e}"))?
                .to_vec()
        } else {
            let path = match self.images_root {
                Some(root) if Path::new(source_uri).is_relative() => root.join(source_uri),
                _ => Path::new(source_uri).to_path_buf(),
            };
            std::fs::read(&path).map_err(|e| format!("read {}: {e}", path.display()))?
        };
        let uri = format!("data:{};base64,{}", sniff_mime(&bytes), BASE64.encode(&bytes));
        self.cache
            .lock()
            .unwrap()
            .insert(source_uri.to_string(), uri.clone());
        Ok(uri)
    }
}

fn sniff_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    }
}

/// Build the chat-completions payload for one query. Image parts come
/// first, in manifest order, then the prompt text.
pub(crate) fn build_payload(
    query: &QueryInstance,
    image_table: &BTreeMap<String, String>,
    resolver: &ImageResolver,
    config: &EndpointConfig,
) -> Result<serde_json::Value, String> {
    let mut content = Vec::with_capacity(query.images.len() + 1);
    for id in &query.images {
        let source_uri = image_table
            .get(id.0.as_str())
            .ok_or_else(|| format!("image '{id}' missing from the manifest image table"))?;
        let uri = resolver.data_uri(source_uri)?;
        content.push(serde_json::json!({
            "type": "image_url",
            "image_url": {"url": uri},
        }));
    }
    content.push(serde_json::json!({"type": "text", "text": query.prompt}));
    Ok(serde_json::json!({
        "model": config.model,
        "user": query.query_id,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
        "messages": [{"role": "user", "content": content}],
    }))
}

pub(crate) enum SendOutcome {
    Ok(String),
    Failed(ErrorClass),
}

/// One HTTP exchange, classified.
pub(crate) fn send_once(
    client: &reqwest::blocking::Client,
    config: &EndpointConfig,
    auth_token: Option<&str>,
    payload: &serde_json::Value,
) -> SendOutcome {
    let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
    let mut request = client.post(&url).json(payload);
    if let Some(token) = auth_token {
        request = request.bearer_auth(token);
    }
    let response = match request.send() {
        Ok(r) => r,
        Err(e) if e.is_timeout() => return SendOutcome::Failed(ErrorClass::Timeout),
        Err(_) => return SendOutcome::Failed(ErrorClass::Server),
    };
    let status = response.status();
    if status.as_u16() == 429 {
        return SendOutcome::Failed(ErrorClass::RateLimited);
    }
    if status.is_server_error() {
        return SendOutcome::Failed(ErrorClass::Server);
    }
    if !status.is_success() {
        return SendOutcome::Failed(ErrorClass::Malformed);
    }
    let body: serde_json::Value = match response.json() {
        Ok(v) => v,
        Err(e) if e.is_timeout() => return SendOutcome::Failed(ErrorClass::Timeout),
        Err(_) => return SendOutcome::Failed(ErrorClass::Malformed),
    };
    match body["choices"][0]["message"]["content"].as_str() {
        Some(text) => SendOutcome::Ok(text.to_string()),
        None => SendOutcome::Failed(ErrorClass::Malformed),
    }
}
