//! Run lifecycle: configuration, stage sequencing, checkpoints, resume,
//! metrics and the ablation harness.
//!
//! A run directory holds `run.json` (the [`RunState`]), `config.json`,
//! `prompt.json`, every stage's artifacts, `traces/`, `calls.log`,
//! `timeline.json` and `report.json`. State is checkpointed after every
//! stage; the manifest records a hash of every committed artifact except
//! `calls.log`, `report.json` and the state and lock files.

mod ablation;
mod config;
mod metrics;
mod products;
mod state;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::digest::{canonical_json, sha256_hex};
use crate::providers::http::HttpProvider;
use crate::providers::mock::{MockProvider, MockScenario};
use crate::providers::{Backend, CallLog, Provider, ProviderHub};
use crate::schema::{StoryOutput, UserPrompt};
use crate::stages::{StageContext, StageError, StageId};

pub use ablation::{run_ablation, sign_test_p_value, AblationReport, AblationRow, DefectModel, SignTest};
pub use config::{default_mock_providers, ResolvedConfig, RunConfig};
pub use metrics::{
    build_report, compliance_rate, family, family_results, loop_kind, Compliance, MetricsError, MetricsReport,
};
pub use products::{load_stage, run_stage, AudioProducts, FitSummary, Products, StageFiles};
pub use state::{
    file_digest, Cursor, RunLock, RunState, StageRecord, StageStatus, CALL_LOG, LOCK_FILE, REPORT_FILE,
    STATE_FILE,
};

pub const CONFIG_FILE: &str = "config.json";
pub const PROMPT_FILE: &str = "prompt.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run directory is locked by another writer ({}); remove the lock if no run is active", .0.display())]
    Locked(PathBuf),
    #[error("{} already holds a run; use resume", .0.display())]
    AlreadyExists(PathBuf),
    #[error("{} is not a run directory (no run.json)", .0.display())]
    NotARun(PathBuf),
    #[error("artifact `{path}` does not match the manifest (expected {expected}, found {found})")]
    ManifestMismatch { path: String, expected: String, found: String },
    #[error("configuration changed since the run started (stored {stored}, now {current}); pass --allow-config-change to continue anyway")]
    ConfigDigestMismatch { stored: String, current: String },
    #[error("invalid run state: {0}")]
    State(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: StageId,
        #[source]
        source: StageError,
    },
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }

    /// The stage that failed, for stage errors.
    pub fn failed_stage(&self) -> Option<StageId> {
        match self {
            RunError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop cleanly after this stage completes, as if the process were killed there.
    pub halt_after: Option<StageId>,
    pub allow_config_change: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub state: RunState,
    /// Present once the audio stage has completed.
    pub story: Option<StoryOutput>,
    pub report: Option<MetricsReport>,
}

/// Builds providers, hub and stage context for a resolved config. `run_dir`
/// selects a file-backed call log and HTTP exchange logs.
pub fn build_context(resolved: &ResolvedConfig, run_dir: Option<&Path>) -> Result<StageContext, RunError> {
    let log = match run_dir {
        Some(dir) => {
            let path = dir.join(CALL_LOG);
            CallLog::with_file(&path).map_err(|e| RunError::io(&path, e))?
        }
        None => CallLog::default(),
    };
    let scenario = Arc::new(resolved.scenario.clone().unwrap_or_default());
    let seed = resolved.config.seed;
    let mut providers: Vec<Arc<dyn Provider>> = Vec::new();
    for d in resolved.providers() {
        providers.push(match d.backend {
            Backend::Mock => Arc::new(MockProvider::new(d, scenario.clone())),
            Backend::Http => {
                let mut p = HttpProvider::new(d, seed).map_err(|e| RunError::Config(e.to_string()))?;
                if let Some(dir) = run_dir {
                    p = p.with_log_dir(dir.join("http"));
                }
                Arc::new(p)
            }
        });
    }
    let hub = ProviderHub::new(providers, Arc::new(log)).map_err(|e| RunError::Config(e.to_string()))?;
    let offline = (resolved.config.backend == Backend::Mock).then_some(scenario);
    StageContext::new(hub, offline, resolved.config.pipeline.clone(), seed)
        .map_err(|e| RunError::Config(e.to_string()))
}

fn run_id(digest: &str, prompt: &UserPrompt) -> String {
    let mut bytes = digest.as_bytes().to_vec();
    bytes.extend(canonical_json(prompt));
    format!("run-{}", &sha256_hex(&bytes)[..12])
}

fn commit(run_dir: &Path, state: &mut RunState, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
    state::write_atomic(&run_dir.join(rel), bytes)?;
    state.manifest.insert(rel.to_string(), file_digest(bytes));
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(run_dir: &Path, rel: &str) -> Result<T, RunError> {
    let path = run_dir.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| RunError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::State(format!("{rel}: {e}")))
}

/// Starts a new run in `run_dir` (created if needed) and executes the
/// stages in order, checkpointing after each.
pub fn run_pipeline(
    resolved: &ResolvedConfig,
    prompt: &UserPrompt,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    prompt.validate().map_err(|e| RunError::Config(format!("prompt: {e}")))?;
    let _lock = RunLock::acquire(run_dir)?;
    if run_dir.join(STATE_FILE).exists() {
        return Err(RunError::AlreadyExists(run_dir.to_path_buf()));
    }
    let digest = resolved.digest();
    let mut state = RunState::new(run_id(&digest, prompt), resolved.config.seed, digest);
    commit(run_dir, &mut state, CONFIG_FILE, &canonical_json(resolved))?;
    commit(run_dir, &mut state, PROMPT_FILE, &canonical_json(prompt))?;
    state.save(run_dir)?;
    log::info!("{}: started in {}", state.run_id, run_dir.display());
    drive(resolved, prompt, run_dir, state, Products::default(), opts)
}

/// Continues a run from its first incomplete stage. Completed stages are
/// never re-executed; their artifacts must still match the manifest. With
/// `config`, the run continues under that configuration, which must have the
/// stored digest unless `allow_config_change` is set.
pub fn resume(
    run_dir: &Path,
    config: Option<&ResolvedConfig>,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    if !run_dir.join(STATE_FILE).is_file() {
        return Err(RunError::NotARun(run_dir.to_path_buf()));
    }
    let _lock = RunLock::acquire(run_dir)?;
    let mut state = RunState::load(run_dir)?;
    state.verify_manifest(run_dir)?;
    let stored: ResolvedConfig = read_json(run_dir, CONFIG_FILE)?;
    let prompt: UserPrompt = read_json(run_dir, PROMPT_FILE)?;
    let resolved = match config {
        Some(c) if c.digest() != state.config_digest => {
            if !opts.allow_config_change {
                return Err(RunError::ConfigDigestMismatch {
                    stored: state.config_digest.clone(),
                    current: c.digest(),
                });
            }
            state.warnings.push(format!(
                "configuration changed on resume ({} -> {})",
                state.config_digest,
                c.digest()
            ));
            state.config_digest = c.digest();
            commit(run_dir, &mut state, CONFIG_FILE, &canonical_json(c))?;
            state.save(run_dir)?;
            c.clone()
        }
        _ => stored,
    };

    let mut products = Products::default();
    for stage in StageId::ALL {
        if state.status(stage) == StageStatus::Complete {
            products::load_stage(run_dir, stage, &mut products)?;
        }
    }
    if state.is_done() {
        log::info!("{}: already complete", state.run_id);
        let report = read_json(run_dir, REPORT_FILE).ok();
        return Ok(RunOutcome {
            run_dir: run_dir.to_path_buf(),
            story: products.audio.map(|a| a.story),
            report,
            state,
        });
    }
    log::info!("{}: resuming at {:?}", state.run_id, state.cursor);
    drive(&resolved, &prompt, run_dir, state, products, opts)
}

fn drive(
    resolved: &ResolvedConfig,
    prompt: &UserPrompt,
    run_dir: &Path,
    mut state: RunState,
    mut products: Products,
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let ctx = build_context(resolved, Some(run_dir))?;
    while let Cursor::Stage(stage) = state.cursor {
        let rec = state.record_mut(stage);
        rec.status = StageStatus::Running;
        rec.error = None;
        state.save(run_dir)?;
        let started = Instant::now();
        let result = products::run_stage(&ctx, prompt, stage, &mut products);
        let seconds = started.elapsed().as_secs_f64();
        state.record_mut(stage).seconds = seconds;
        match result {
            Ok(out) => {
                for (rel, bytes) in &out.files {
                    commit(run_dir, &mut state, rel, bytes)?;
                }
                state.warnings.extend(out.warnings.into_iter().map(|w| format!("{stage}: {w}")));
                state.record_mut(stage).status = StageStatus::Complete;
                state.cursor = match stage.position() + 1 {
                    i if i < StageId::ALL.len() => Cursor::Stage(StageId::ALL[i]),
                    _ => Cursor::Done,
                };
                state.save(run_dir)?;
                log::info!("{}: {stage} complete in {seconds:.3}s", state.run_id);
                if opts.halt_after == Some(stage) {
                    break;
                }
            }
            Err(source) => {
                let rec = state.record_mut(stage);
                rec.status = StageStatus::Failed;
                rec.error = Some(source.to_string());
                state.save(run_dir)?;
                log::error!("{}: {stage} failed: {source}", state.run_id);
                return Err(RunError::Stage { stage, source });
            }
        }
    }

    let report = if state.is_done() {
        let seconds: BTreeMap<String, f64> =
            state.stages.iter().map(|r| (r.stage.to_string(), r.seconds)).collect();
        let report = build_report(&state.run_id, &products, &ctx, seconds);
        state::write_atomic(&run_dir.join(REPORT_FILE), &canonical_json(&report))?;
        Some(report)
    } else {
        None
    };
    Ok(RunOutcome { run_dir: run_dir.to_path_buf(), story: products.audio.map(|a| a.story), report, state })
}

/// Result of a run that writes nothing to disk.
#[derive(Debug, Clone)]
pub struct MemoryRun {
    pub products: Products,
    pub report: MetricsReport,
    pub warnings: Vec<String>,
}

/// Runs every stage in memory; used by the ablation harness and tests.
pub fn run_in_memory(resolved: &ResolvedConfig, prompt: &UserPrompt) -> Result<MemoryRun, RunError> {
    prompt.validate().map_err(|e| RunError::Config(format!("prompt: {e}")))?;
    let ctx = build_context(resolved, None)?;
    let mut products = Products::default();
    let mut warnings = Vec::new();
    for stage in StageId::ALL {
        let out = products::run_stage(&ctx, prompt, stage, &mut products)
            .map_err(|source| RunError::Stage { stage, source })?;
        warnings.extend(out.warnings.into_iter().map(|w| format!("{stage}: {w}")));
    }
    let report = build_report(&run_id(&resolved.digest(), prompt), &products, &ctx, BTreeMap::new());
    Ok(MemoryRun { products, report, warnings })
}

/// Scenario-driven config for `seed`, used by examples and tests.
pub fn mock_config(seed: u64, scenario: MockScenario) -> ResolvedConfig {
    let config = RunConfig { seed, ..RunConfig::default() };
    ResolvedConfig::new(config, Some(scenario)).expect("default config is valid")
}
