//! The six pipeline stages: script, shot design, character assets,
//! keyframes, animation and audio. Each one builds its loops from the
//! engine, the guideline checkers and the configured providers.

mod agents;
mod audio;
mod characters;
mod keyframes;
pub mod prompts;
mod script;
mod shots;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::canonical_json;
use crate::engine::{EngineError, ExhaustionPolicy, LoopTrace, Outcome};
use crate::guidelines::{ContentChecker, ContentRules, DEFAULT_WORDS_PER_MINUTE};
use crate::providers::mock::MockScenario;
use crate::providers::{ProviderError, ProviderHub};

pub use agents::{caption_for, view_label};
pub use audio::{fit_subtitle, run_audio_stage, AudioOutput, FitOutcome};
pub use characters::{run_character_stage, CharacterAssets, CharacterOutput};
pub use keyframes::{run_animation_stage, run_keyframe_stage, MediaOutput};
pub use prompts::{
    build_animation_prompt, build_keyframe_prompt, PromptError, ANIMATION_ELEMENTS, KEYFRAME_ELEMENTS,
};
pub use script::{run_script_stage, ScriptOutput};
pub use shots::{run_shot_stage, ShotOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    Script,
    Shots,
    Characters,
    Keyframes,
    Animation,
    Audio,
}

impl StageId {
    pub const ALL: [StageId; 6] = [
        StageId::Script,
        StageId::Shots,
        StageId::Characters,
        StageId::Keyframes,
        StageId::Animation,
        StageId::Audio,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Script => "script",
            StageId::Shots => "shots",
            StageId::Characters => "characters",
            StageId::Keyframes => "keyframes",
            StageId::Animation => "animation",
            StageId::Audio => "audio",
        }
    }

    pub fn position(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).expect("listed")
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for StageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Reviewers and refiners that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agent {
    #[serde(rename = "structure_reviewer")]
    StructureReviewer,
    #[serde(rename = "content_reviewer")]
    ContentReviewer,
    #[serde(rename = "style_reviewer")]
    StyleReviewer,
    #[serde(rename = "shot_reviewer")]
    ShotReviewer,
    #[serde(rename = "voice_reviewer")]
    VoiceReviewer,
    #[serde(rename = "subtitle_refiner")]
    SubtitleRefiner,
    #[serde(rename = "t2i_3e")]
    T2i3e,
    #[serde(rename = "i2v_3e")]
    I2v3e,
}

impl Agent {
    pub const ALL: [Agent; 8] = [
        Agent::StructureReviewer,
        Agent::ContentReviewer,
        Agent::StyleReviewer,
        Agent::ShotReviewer,
        Agent::VoiceReviewer,
        Agent::SubtitleRefiner,
        Agent::T2i3e,
        Agent::I2v3e,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Agent::StructureReviewer => "structure_reviewer",
            Agent::ContentReviewer => "content_reviewer",
            Agent::StyleReviewer => "style_reviewer",
            Agent::ShotReviewer => "shot_reviewer",
            Agent::VoiceReviewer => "voice_reviewer",
            Agent::SubtitleRefiner => "subtitle_refiner",
            Agent::T2i3e => "t2i_3e",
            Agent::I2v3e => "i2v_3e",
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Agent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|a| a.as_str()).collect();
            format!("unknown agent `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Iteration budgets per loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub script: u32,
    pub shot: u32,
    pub voice: u32,
    pub t2i: u32,
    pub i2v: u32,
    /// Synthesis attempts per shot in subtitle fitting.
    pub subtitle: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { script: 4, shot: 4, voice: 4, t2i: 2, i2v: 1, subtitle: 5 }
    }
}

pub const DEFAULT_CAPTION_TEMPLATE: &str = "a photo of {name}, {appearance}, {view}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSettings {
    pub budgets: Budgets,
    pub policy: ExhaustionPolicy,
    pub disabled: BTreeSet<Agent>,
    pub approve_threshold: f64,
    pub slack_seconds: f64,
    pub words_per_minute: f64,
    pub frame_count: usize,
    pub turnaround_seconds: f64,
    pub train_adapters: bool,
    pub caption_template: String,
    pub music_catalog: Vec<String>,
    pub emotions: Vec<String>,
    pub content_rules: ContentRules,
    /// Maximum shots processed at once in per-shot stages.
    pub concurrency: usize,
    pub parallel_pool: bool,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            budgets: Budgets::default(),
            policy: ExhaustionPolicy::EmitBestSoFar,
            disabled: BTreeSet::new(),
            approve_threshold: 0.9,
            slack_seconds: 0.25,
            words_per_minute: DEFAULT_WORDS_PER_MINUTE,
            frame_count: 8,
            turnaround_seconds: 6.0,
            train_adapters: false,
            caption_template: DEFAULT_CAPTION_TEMPLATE.into(),
            music_catalog: (1..=6).map(|i| format!("mx-{i:03}")).collect(),
            emotions: [
                "neutral", "happy", "sad", "tense", "calm", "excited", "angry", "fearful", "tender",
                "hopeful",
            ]
            .map(String::from)
            .to_vec(),
            content_rules: ContentRules::default(),
            concurrency: 4,
            parallel_pool: false,
        }
    }
}

impl StageSettings {
    pub fn strict(&self) -> bool {
        self.policy == ExhaustionPolicy::Fail
    }

    pub fn enabled(&self, agent: Agent) -> bool {
        !self.disabled.contains(&agent)
    }
}

/// Everything a stage needs from the run.
pub struct StageContext {
    pub hub: ProviderHub,
    /// Present for mock runs; consulted by the mock examiners and evaluators.
    pub scenario: Option<Arc<MockScenario>>,
    pub settings: StageSettings,
    pub run_seed: u64,
    pub content: ContentChecker,
}

impl StageContext {
    pub fn new(
        hub: ProviderHub,
        scenario: Option<Arc<MockScenario>>,
        settings: StageSettings,
        run_seed: u64,
    ) -> Result<Self, StageError> {
        let content = settings
            .content_rules
            .compile()
            .map_err(|e| StageError::Precondition(format!("content rules: {e}")))?;
        Ok(Self { hub, scenario, settings, run_seed, content })
    }
}

/// Compact record of one finished loop, used by the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSummary {
    pub loop_id: String,
    pub stage: StageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    pub iterations: u32,
    pub max_iterations: u32,
    pub outcome: Outcome,
    pub refiner_calls: u32,
    pub residual_findings: usize,
    /// Axis scores of the final pooled selection.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub final_scores: BTreeMap<String, f64>,
}

/// A loop's summary plus its serialized trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    pub summary: LoopSummary,
    pub trace: Vec<u8>,
}

impl LoopRecord {
    pub fn new<A: Serialize>(stage: StageId, item: Option<&str>, trace: &LoopTrace<A>) -> Self {
        let final_scores = trace
            .records
            .last()
            .and_then(|r| {
                let slot = r.scored_candidates.iter().position(|c| *c == r.selected_index)?;
                r.feedback.get(slot).map(|f| f.scores.clone())
            })
            .unwrap_or_default();
        Self {
            summary: LoopSummary {
                loop_id: trace.loop_id.clone(),
                stage,
                item: item.map(str::to_string),
                iterations: trace.iterations(),
                max_iterations: trace.max_iterations,
                outcome: trace.outcome,
                refiner_calls: trace.refiner_calls,
                residual_findings: trace.residual_findings().len(),
                final_scores,
            },
            trace: canonical_json(trace),
        }
    }

    /// Relative path of the trace file inside the run directory.
    pub fn path(&self) -> String {
        let name: String = self
            .summary
            .loop_id
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        format!("traces/{}/{name}.trace", self.summary.stage)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{stage} stage: {source}")]
    Loop {
        stage: StageId,
        #[source]
        source: Box<EngineError>,
    },
    #[error("{stage} stage: {source}")]
    Provider {
        stage: StageId,
        #[source]
        source: Box<ProviderError>,
    },
    #[error("{stage} stage: {detail}")]
    Schema { stage: StageId, detail: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{stage} stage, shot {shot}: {source}")]
    Shot {
        stage: StageId,
        shot: u32,
        #[source]
        source: Box<StageError>,
    },
    #[error("shot {shot}: audio of {audio_seconds:.2}s still exceeds clip {clip_seconds:.2}s + {slack_seconds:.2}s slack after {attempts} attempt(s)")]
    FitFailure { shot: u32, audio_seconds: f64, clip_seconds: f64, slack_seconds: f64, attempts: u32 },
    #[error("audio stage: story output is invalid: {0}")]
    Output(String),
    #[error("{0}")]
    Precondition(String),
}

impl StageError {
    pub fn stage(&self) -> Option<StageId> {
        match self {
            StageError::Loop { stage, .. }
            | StageError::Provider { stage, .. }
            | StageError::Schema { stage, .. }
            | StageError::Shot { stage, .. } => Some(*stage),
            StageError::Prompt(PromptError::MissingKeyframe { .. }) => Some(StageId::Animation),
            StageError::Prompt(_) => Some(StageId::Keyframes),
            StageError::FitFailure { .. } | StageError::Output(_) => Some(StageId::Audio),
            StageError::Precondition(_) => None,
        }
    }
}

/// Runs `f` over `items` with at most `width` in flight; results keep item order.
pub(crate) fn for_each_bounded<T: Sync, R: Send>(
    items: &[T],
    width: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let width = width.max(1);
    if width == 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(width) {
        let results: Vec<R> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|item| s.spawn(|| f(item))).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        out.extend(results);
    }
    out
}
