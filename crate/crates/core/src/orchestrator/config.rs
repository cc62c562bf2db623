use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::digest::{canonical_json, sha256_hex};
use crate::providers::mock::MockScenario;
use crate::providers::{Backend, Capability, ProviderDescriptor};
use crate::stages::StageSettings;

/// Run configuration as read from TOML.
///
/// ```toml
/// seed = 7
/// backend = "mock"
/// scenario = "clean.mock.toml"   # relative to this file
///
/// [pipeline]
/// policy = "fail"                 # or "emit-best-so-far"
/// disabled = ["subtitle_refiner"]
///
/// [pipeline.budgets]
/// script = 4
///
/// [[providers]]
/// id = "t2i-a"
/// capability = "t2i"
/// backend = "http"
/// pool_order = 0
/// config = { endpoint = "http://localhost:9000/t2i" }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub backend: Backend,
    pub scenario: Option<PathBuf>,
    pub pipeline: StageSettings,
    /// Empty means the default mock pools when `backend = "mock"`.
    pub providers: Vec<ProviderDescriptor>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            backend: Backend::Mock,
            scenario: None,
            pipeline: StageSettings::default(),
            providers: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(format!("config: {e}")))
    }

    /// Reads a config file; a relative `scenario` path is taken relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(s), Some(dir)) = (&cfg.scenario, path.parent()) {
            if s.is_relative() {
                cfg.scenario = Some(dir.join(s));
            }
        }
        Ok(cfg)
    }

    /// Loads the scenario file, if any, and checks the settings.
    pub fn resolve(&self) -> Result<ResolvedConfig, RunError> {
        let scenario = match (&self.scenario, self.backend) {
            (Some(p), _) => Some(
                MockScenario::load(p)
                    .map_err(|e| RunError::Config(format!("scenario {}: {e}", p.display())))?,
            ),
            (None, Backend::Mock) => Some(MockScenario::default()),
            (None, Backend::Http) => None,
        };
        let mut config = self.clone();
        config.scenario = None;
        ResolvedConfig::new(config, scenario)
    }
}

/// A config with its scenario loaded inline: the unit that is digested,
/// stored in the run directory and compared on resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<MockScenario>,
}

impl ResolvedConfig {
    pub fn new(config: RunConfig, scenario: Option<MockScenario>) -> Result<Self, RunError> {
        let r = Self { config, scenario };
        r.check()?;
        Ok(r)
    }

    pub fn digest(&self) -> String {
        format!("sha256-{}", sha256_hex(&canonical_json(self)))
    }

    /// Provider list after defaults. An http run uses the configured list as
    /// is; a mock run uses its configured mock providers, or the standard
    /// pools (one text, three T2I, three I2V, one T2A, one adapter trainer).
    pub fn providers(&self) -> Vec<ProviderDescriptor> {
        let configured: Vec<ProviderDescriptor> = match self.config.backend {
            Backend::Mock => {
                self.config.providers.iter().filter(|p| p.backend == Backend::Mock).cloned().collect()
            }
            Backend::Http => return self.config.providers.clone(),
        };
        if configured.is_empty() {
            default_mock_providers()
        } else {
            configured
        }
    }

    pub fn uses_http(&self) -> bool {
        self.providers().iter().any(|p| p.backend == Backend::Http)
    }

    fn check(&self) -> Result<(), RunError> {
        let s = &self.config.pipeline;
        let b = &s.budgets;
        let mut problems = Vec::new();
        for (name, v) in [
            ("script", b.script),
            ("shot", b.shot),
            ("voice", b.voice),
            ("t2i", b.t2i),
            ("i2v", b.i2v),
            ("subtitle", b.subtitle),
        ] {
            if v == 0 {
                problems.push(format!("budgets.{name} must be at least 1"));
            }
        }
        if !(s.slack_seconds >= 0.0) {
            problems.push("slack_seconds must be non-negative".into());
        }
        if !(s.words_per_minute > 0.0) {
            problems.push("words_per_minute must be positive".into());
        }
        if !(s.turnaround_seconds > 0.0) {
            problems.push("turnaround_seconds must be positive".into());
        }
        if !(0.0..=1.0).contains(&s.approve_threshold) {
            problems.push("approve_threshold must lie in [0, 1]".into());
        }
        if s.frame_count == 0 {
            problems.push("frame_count must be at least 1".into());
        }
        if s.music_catalog.is_empty() {
            problems.push("music_catalog is empty".into());
        }
        if s.emotions.is_empty() {
            problems.push("emotions is empty".into());
        }
        if let Err(e) = s.content_rules.compile() {
            problems.push(format!("content_rules: {e}"));
        }
        let providers = self.providers();
        for cap in [Capability::Text, Capability::T2i, Capability::I2v, Capability::T2a] {
            if !providers.iter().any(|p| p.capability == cap) {
                problems.push(format!("no provider configured for capability {cap}"));
            }
        }
        if s.train_adapters && !providers.iter().any(|p| p.capability == Capability::AdapterTrain) {
            problems.push("train_adapters is set but no adapter-train provider is configured".into());
        }
        if self.config.backend == Backend::Mock && self.scenario.is_none() {
            problems.push("mock backend needs a scenario".into());
        }
        match problems.is_empty() {
            true => Ok(()),
            false => Err(RunError::Config(problems.join("; "))),
        }
    }
}

pub fn default_mock_providers() -> Vec<ProviderDescriptor> {
    let mut v = vec![ProviderDescriptor::mock("mock-text", Capability::Text, 0)];
    for (i, tag) in ["a", "b", "c"].iter().enumerate() {
        v.push(ProviderDescriptor::mock(format!("mock-t2i-{tag}"), Capability::T2i, i as u32));
    }
    for (i, tag) in ["a", "b", "c"].iter().enumerate() {
        v.push(ProviderDescriptor::mock(format!("mock-i2v-{tag}"), Capability::I2v, i as u32));
    }
    v.push(ProviderDescriptor::mock("mock-t2a", Capability::T2a, 0));
    v.push(ProviderDescriptor::mock("mock-adapter", Capability::AdapterTrain, 0));
    v
}
