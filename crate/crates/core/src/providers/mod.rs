//! Uniform access to generative backends.
//!
//! Every capability (text, T2I, I2V, T2A, adapter training) is reached through
//! the [`Provider`] trait with one request envelope. Two backends implement
//! it: [`mock::MockProvider`], a pure function of (scenario, call key, seed),
//! and [`http::HttpProvider`], a JSON-over-HTTP adapter with retries.
//! [`ProviderHub`] owns the configured providers and the call log.

mod calllog;
mod error;
pub mod http;
pub mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{canonical_json, content_id, sha256_hex};
use crate::schema::{AssetKind, AssetRef, PromptKind, PromptSpec};

pub use calllog::{CallLog, CallRecord};
pub use error::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Capability {
    Text,
    T2i,
    I2v,
    T2a,
    AdapterTrain,
}

impl Capability {
    pub fn accepts(self, kind: PromptKind) -> bool {
        matches!(
            (self, kind),
            (Capability::Text, PromptKind::Text)
                | (Capability::T2i, PromptKind::T2i)
                | (Capability::I2v, PromptKind::I2v)
                | (Capability::T2a, PromptKind::T2a)
                | (Capability::AdapterTrain, PromptKind::Text)
        )
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Capability::Text => "text",
            Capability::T2i => "t2i",
            Capability::I2v => "i2v",
            Capability::T2a => "t2a",
            Capability::AdapterTrain => "adapter-train",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Mock,
    Http,
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Backend::Mock),
            "http" => Ok(Backend::Http),
            other => Err(format!("unknown backend `{other}` (expected mock or http)")),
        }
    }
}

/// One configured provider. `config` holds backend settings such as
/// `endpoint`, `timeout_ms`, `retries`, `backoff_ms` and `auth_env` (the
/// name of the environment variable holding the bearer token).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub id: String,
    pub capability: Capability,
    pub backend: Backend,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    #[serde(default)]
    pub pool_order: u32,
}

impl ProviderDescriptor {
    pub fn mock(id: impl Into<String>, capability: Capability, pool_order: u32) -> Self {
        Self { id: id.into(), capability, backend: Backend::Mock, config: BTreeMap::new(), pool_order }
    }
}

/// Call coordinates `(stage[#item], role, iteration, candidate)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallKey {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    pub role: String,
    pub iteration: u32,
    pub candidate: u32,
}

impl CallKey {
    pub fn new(stage: impl Into<String>, role: impl Into<String>, iteration: u32, candidate: u32) -> Self {
        Self { stage: stage.into(), item: None, role: role.into(), iteration, candidate }
    }

    pub fn with_item(mut self, item: impl Into<String>) -> Self {
        self.item = Some(item.into());
        self
    }

    pub fn for_item(&self, item: impl Into<String>) -> Self {
        self.clone().with_item(item)
    }
}

impl fmt::Display for CallKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.stage)?;
        if let Some(item) = &self.item {
            write!(f, "#{item}")?;
        }
        write!(f, "/{}/{}/{}", self.role, self.iteration, self.candidate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub key: CallKey,
    pub prompt: PromptSpec,
    pub seed: u64,
}

/// A generated media payload plus its normalized handle.
///
/// `hints` carries scores a mock backend attaches to its output so the mock
/// evaluator can read them back; real backends leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAsset {
    pub asset: AssetRef,
    #[serde(skip)]
    pub bytes: Vec<u8>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hints: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub provider: String,
}

impl GeneratedAsset {
    /// Wraps raw bytes, addressing them by content unless `label` is given.
    pub fn from_bytes(kind: AssetKind, bytes: Vec<u8>, label: Option<&str>, duration: Option<f64>) -> Self {
        let id = label.map(str::to_string).unwrap_or_else(|| content_id(&bytes));
        let mut asset = AssetRef::new(id, kind);
        asset.duration_seconds = duration;
        Self { asset, bytes, hints: BTreeMap::new(), provider: String::new() }
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProviderResponse {
    pub text: Option<String>,
    pub asset: Option<GeneratedAsset>,
    pub metadata: BTreeMap<String, String>,
}

impl ProviderResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: Some(text.into()), ..Default::default() }
    }

    pub fn asset(asset: GeneratedAsset) -> Self {
        Self { asset: Some(asset), ..Default::default() }
    }

    pub fn expect_text(self, provider: &str) -> Result<String, ProviderError> {
        self.text.ok_or_else(|| ProviderError::malformed(provider, "expected a text response"))
    }

    pub fn expect_asset(self, provider: &str, kind: AssetKind) -> Result<GeneratedAsset, ProviderError> {
        match self.asset {
            Some(a) if a.asset.kind == kind => {
                a.asset.validate().map_err(|e| ProviderError::malformed(provider, e))?;
                Ok(a)
            }
            Some(a) => Err(ProviderError::malformed(
                provider,
                format!("expected a {kind} asset, got {}", a.asset.kind),
            )),
            None => Err(ProviderError::malformed(provider, format!("expected a {kind} asset"))),
        }
    }

    /// Stable digest of the normalized response.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            text: &'a Option<String>,
            asset: Option<(&'a AssetRef, String)>,
            metadata: &'a BTreeMap<String, String>,
        }
        let view = View {
            text: &self.text,
            asset: self.asset.as_ref().map(|a| (&a.asset, a.sha256())),
            metadata: &self.metadata,
        };
        sha256_hex(&canonical_json(&view))
    }
}

pub trait Provider: Send + Sync {
    fn descriptor(&self) -> &ProviderDescriptor;
    fn call(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

/// Checks the capability, performs the call and journals it.
pub fn invoke(
    provider: &dyn Provider,
    request: &ProviderRequest,
    log: &CallLog,
) -> Result<ProviderResponse, ProviderError> {
    let d = provider.descriptor();
    if !d.capability.accepts(request.prompt.kind) {
        return Err(ProviderError::CapabilityMismatch {
            provider: d.id.clone(),
            capability: d.capability.to_string(),
            kind: request.prompt.kind.to_string(),
        });
    }
    let request_digest = sha256_hex(&canonical_json(request));
    let started = Instant::now();
    let result = provider.call(request);
    let response_digest = match &result {
        Ok(r) => r.digest(),
        Err(e) => sha256_hex(e.to_string().as_bytes()),
    };
    log.append(&d.id, &request.key, request_digest, response_digest, started.elapsed(), result.is_ok());
    result
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HubError {
    #[error("provider id `{0}` is configured twice")]
    DuplicateId(String),
    #[error("pool_order {order} is used twice for capability {capability}")]
    DuplicatePoolOrder { capability: Capability, order: u32 },
}

/// The run's configured providers, grouped into per-capability pools.
#[derive(Clone)]
pub struct ProviderHub {
    providers: Vec<Arc<dyn Provider>>,
    log: Arc<CallLog>,
}

impl ProviderHub {
    pub fn new(providers: Vec<Arc<dyn Provider>>, log: Arc<CallLog>) -> Result<Self, HubError> {
        let mut ids = std::collections::BTreeSet::new();
        let mut orders = std::collections::BTreeSet::new();
        for p in &providers {
            let d = p.descriptor();
            if !ids.insert(d.id.clone()) {
                return Err(HubError::DuplicateId(d.id.clone()));
            }
            if !orders.insert((d.capability, d.pool_order)) {
                return Err(HubError::DuplicatePoolOrder { capability: d.capability, order: d.pool_order });
            }
        }
        Ok(Self { providers, log })
    }

    pub fn log(&self) -> &CallLog {
        &self.log
    }

    /// Providers of `capability`, ordered by `pool_order`.
    pub fn pool(&self, capability: Capability) -> Vec<Arc<dyn Provider>> {
        let mut pool: Vec<_> =
            self.providers.iter().filter(|p| p.descriptor().capability == capability).cloned().collect();
        pool.sort_by_key(|p| p.descriptor().pool_order);
        pool
    }

    pub fn primary(&self, capability: Capability) -> Result<Arc<dyn Provider>, ProviderError> {
        self.pool(capability)
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::NotConfigured(capability.to_string()))
    }

    pub fn invoke(
        &self,
        provider: &dyn Provider,
        request: &ProviderRequest,
    ) -> Result<ProviderResponse, ProviderError> {
        invoke(provider, request, &self.log)
    }

    pub fn descriptors(&self) -> Vec<ProviderDescriptor> {
        self.providers.iter().map(|p| p.descriptor().clone()).collect()
    }
}

/// Adapter-training hook. The mock backend returns a stub adapter whose
/// manifest lists the content ids of its training images; the HTTP backend
/// submits the job to its endpoint and returns the trained adapter payload.
pub fn train_adapter_hook(
    hub: &ProviderHub,
    provider: &dyn Provider,
    key: CallKey,
    seed: u64,
    images: &[AssetRef],
    captions: &[String],
) -> Result<GeneratedAsset, ProviderError> {
    if images.is_empty() || images.len() != captions.len() {
        return Err(ProviderError::LengthMismatch { images: images.len(), captions: captions.len() });
    }
    let mut prompt = PromptSpec::text(captions.join("\n"));
    prompt.attachments = images.to_vec();
    let request = ProviderRequest { key, prompt, seed };
    let id = provider.descriptor().id.clone();
    hub.invoke(provider, &request)?.expect_asset(&id, AssetKind::ModelAdapter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_key_display() {
        let k = CallKey::new("keyframes", "generator", 1, 0).with_item("3");
        assert_eq!(k.to_string(), "keyframes#3/generator/1/0");
        assert_eq!(CallKey::new("script", "generator", 2, 0).to_string(), "script/generator/2/0");
    }

    #[test]
    fn capability_matching() {
        assert!(Capability::T2i.accepts(PromptKind::T2i));
        assert!(!Capability::T2i.accepts(PromptKind::I2v));
        assert!(Capability::AdapterTrain.accepts(PromptKind::Text));
    }

    fn hub_with(cap: Capability) -> (ProviderHub, Arc<dyn Provider>) {
        let p: Arc<dyn Provider> = Arc::new(mock::MockProvider::new(
            ProviderDescriptor::mock("trainer", cap, 0),
            Arc::new(mock::MockScenario::default()),
        ));
        (ProviderHub::new(vec![p.clone()], Arc::new(CallLog::default())).unwrap(), p)
    }

    #[test]
    fn adapter_manifest_lists_image_hashes() {
        let (hub, p) = hub_with(Capability::AdapterTrain);
        let images: Vec<AssetRef> =
            (0..4u8).map(|i| AssetRef::new(content_id(&[i]), AssetKind::Image)).collect();
        let captions: Vec<String> = (0..4).map(|i| format!("view {i}")).collect();
        let key = CallKey::new("characters", "adapter-trainer", 1, 0);
        let a = train_adapter_hook(&hub, p.as_ref(), key, 5, &images, &captions).unwrap();
        assert_eq!(a.asset.kind, AssetKind::ModelAdapter);
        let manifest: serde_json::Value = serde_json::from_slice(&a.bytes).unwrap();
        let listed: Vec<&str> =
            manifest["images"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let expected: Vec<&str> = images.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(listed, expected);
        assert_eq!(hub.log().len(), 1);
    }

    #[test]
    fn adapter_hook_checks_lengths() {
        let (hub, p) = hub_with(Capability::AdapterTrain);
        let img = |i: u8| AssetRef::new(content_id(&[i]), AssetKind::Image);
        let key = CallKey::new("characters", "adapter-trainer", 1, 0);
        let three = vec![img(0), img(1), img(2)];
        let four: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        assert_eq!(
            train_adapter_hook(&hub, p.as_ref(), key.clone(), 1, &three, &four).unwrap_err(),
            ProviderError::LengthMismatch { images: 3, captions: 4 }
        );
        assert_eq!(
            train_adapter_hook(&hub, p.as_ref(), key, 1, &[], &[]).unwrap_err(),
            ProviderError::LengthMismatch { images: 0, captions: 0 }
        );
    }

    #[test]
    fn hub_rejects_duplicate_pool_order() {
        let scenario = Arc::new(mock::MockScenario::default());
        let a: Arc<dyn Provider> = Arc::new(mock::MockProvider::new(
            ProviderDescriptor::mock("a", Capability::T2i, 0),
            scenario.clone(),
        ));
        let b: Arc<dyn Provider> =
            Arc::new(mock::MockProvider::new(ProviderDescriptor::mock("b", Capability::T2i, 0), scenario));
        assert!(matches!(
            ProviderHub::new(vec![a, b], Arc::new(CallLog::default())),
            Err(HubError::DuplicatePoolOrder { .. })
        ));
    }
}
