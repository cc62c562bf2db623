use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("provider `{provider}` timed out after {attempts} attempt(s): {detail}")]
    Timeout { provider: String, attempts: u32, detail: String },
    #[error("provider `{provider}` returned a malformed response: {detail}")]
    MalformedResponse { provider: String, detail: String },
    #[error("provider `{provider}` refused the request: {detail}")]
    Refused { provider: String, detail: String },
    #[error("no scenario entry for `{key}`")]
    MissingScenarioEntry { key: String },
    #[error("provider `{provider}` has capability {capability} but was asked for a {kind} request")]
    CapabilityMismatch { provider: String, capability: String, kind: String },
    #[error("{images} image(s) but {captions} caption(s); need equal, non-zero counts")]
    LengthMismatch { images: usize, captions: usize },
    #[error("no provider configured for {0}")]
    NotConfigured(String),
}

impl ProviderError {
    pub fn malformed(provider: impl Into<String>, detail: impl ToString) -> Self {
        ProviderError::MalformedResponse { provider: provider.into(), detail: detail.to_string() }
    }
}
