//! JSON-over-HTTP provider adapter.
//!
//! Wire format. Request body:
//!
//! ```json
//! {"provider": "t2i-a", "capability": "t2i", "key": "keyframes#1/generator/1/0",
//!  "seed": 42, "prompt": { ...PromptSpec... }}
//! ```
//!
//! Response body:
//!
//! ```json
//! {"text": "...", "asset": {"kind": "image", "data_base64": "...", "duration_seconds": 5.0},
//!  "metadata": {"model": "..."}}
//! ```
//!
//! Transport failures and 5xx replies are retried with exponential backoff;
//! 4xx replies are refusals and are not retried. When a log directory is
//! set, each exchange is written to `<dir>/<call-key>.json`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    Capability, GeneratedAsset, Provider, ProviderDescriptor, ProviderError, ProviderRequest,
    ProviderResponse,
};
use crate::digest::canonical_json;
use crate::schema::{AssetKind, PromptSpec};
use crate::seed::derive_seed;

pub const DEFAULT_RETRIES: u32 = 3;
pub const DEFAULT_BACKOFF_MS: u64 = 1000;
pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    provider: &'a str,
    capability: Capability,
    key: String,
    seed: u64,
    prompt: &'a PromptSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAsset {
    kind: AssetKind,
    data_base64: String,
    #[serde(default)]
    duration_seconds: Option<f64>,
    #[serde(default)]
    id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    asset: Option<WireAsset>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

pub struct HttpProvider {
    descriptor: ProviderDescriptor,
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
    auth_token: Option<String>,
    jitter_seed: u64,
    log_dir: Option<PathBuf>,
}

impl HttpProvider {
    /// Builds the adapter from the descriptor's `config` map: `endpoint`
    /// (required), `timeout_ms`, `retries`, `backoff_ms`, `auth_env`.
    pub fn new(descriptor: ProviderDescriptor, run_seed: u64) -> Result<Self, ProviderError> {
        let cfg = &descriptor.config;
        let endpoint = cfg.get("endpoint").cloned().ok_or_else(|| {
            ProviderError::NotConfigured(format!("endpoint for provider `{}`", descriptor.id))
        })?;
        let num = |k: &str, default: u64| -> Result<u64, ProviderError> {
            cfg.get(k).map_or(Ok(default), |v| {
                v.parse().map_err(|_| {
                    ProviderError::NotConfigured(format!("`{k}` for `{}` is not a number", descriptor.id))
                })
            })
        };
        let timeout = Duration::from_millis(num("timeout_ms", DEFAULT_TIMEOUT_MS)?);
        let retries = num("retries", DEFAULT_RETRIES as u64)? as u32;
        let backoff = Duration::from_millis(num("backoff_ms", DEFAULT_BACKOFF_MS)?);
        let auth_token = cfg.get("auth_env").and_then(|var| std::env::var(var).ok());
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Ok(Self {
            jitter_seed: derive_seed(run_seed, &[crate::seed::fnv1a(&descriptor.id)]),
            descriptor,
            endpoint,
            agent,
            retries,
            backoff,
            auth_token,
            log_dir: None,
        })
    }

    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.log_dir = Some(dir.into());
        self
    }

    fn delay(&self, attempt: u32) -> Duration {
        let base = self.backoff.saturating_mul(1 << attempt.min(16));
        let jitter =
            derive_seed(self.jitter_seed, &[attempt as u64]) % (self.backoff.as_millis() as u64 / 4 + 1);
        base + Duration::from_millis(jitter)
    }

    fn log_exchange(&self, request: &ProviderRequest, body: &Value, outcome: &Value) {
        let Some(dir) = &self.log_dir else { return };
        let name: String = request
            .key
            .to_string()
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let record = serde_json::json!({
            "provider": self.descriptor.id,
            "endpoint": self.endpoint,
            "request": body,
            "response": outcome,
        });
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join(format!("{name}.json")), canonical_json(&record));
        }
    }

    fn normalize(&self, raw: &str) -> Result<ProviderResponse, ProviderError> {
        let id = &self.descriptor.id;
        let wire: WireResponse = serde_json::from_str(raw).map_err(|e| ProviderError::malformed(id, e))?;
        let asset = match wire.asset {
            None => None,
            Some(a) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(a.data_base64.as_bytes())
                    .map_err(|e| ProviderError::malformed(id, format!("asset payload: {e}")))?;
                let mut g = GeneratedAsset::from_bytes(a.kind, bytes, a.id.as_deref(), a.duration_seconds);
                g.provider = id.clone();
                g.asset.validate().map_err(|e| ProviderError::malformed(id, e))?;
                Some(g)
            }
        };
        if wire.text.is_none() && asset.is_none() {
            return Err(ProviderError::malformed(id, "response has neither text nor asset"));
        }
        Ok(ProviderResponse { text: wire.text, asset, metadata: wire.metadata })
    }
}

impl Provider for HttpProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let id = self.descriptor.id.clone();
        let body = serde_json::to_value(WireRequest {
            provider: &id,
            capability: self.descriptor.capability,
            key: request.key.to_string(),
            seed: request.seed,
            prompt: &request.prompt,
        })
        .expect("request serializes");

        let attempts = self.retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.delay(attempt - 1));
            }
            let mut req = self.agent.post(&self.endpoint).set("content-type", "application/json");
            if let Some(token) = &self.auth_token {
                req = req.set("authorization", &format!("Bearer {token}"));
            }
            match req.send_string(&body.to_string()) {
                Ok(resp) => {
                    let text = resp.into_string().map_err(|e| ProviderError::malformed(&id, e))?;
                    self.log_exchange(request, &body, &serde_json::json!({ "status": 200, "body": text }));
                    return self.normalize(&text);
                }
                Err(ureq::Error::Status(code, resp)) if (400..500).contains(&code) => {
                    let detail = resp.into_string().unwrap_or_default();
                    self.log_exchange(request, &body, &serde_json::json!({ "status": code, "body": detail }));
                    return Err(ProviderError::Refused {
                        provider: id,
                        detail: format!("HTTP {code}: {detail}"),
                    });
                }
                Err(ureq::Error::Status(code, _)) => last_error = format!("HTTP {code}"),
                Err(e) => last_error = e.to_string(),
            }
        }
        self.log_exchange(request, &body, &serde_json::json!({ "error": last_error }));
        Err(ProviderError::Timeout { provider: id, attempts, detail: last_error })
    }
}
