//! Scripted, seeded mock backend.
//!
//! A [`MockScenario`] maps call-key patterns to scripted payloads, injected
//! defects, score vectors and failure directives. Scenario files are TOML:
//!
//! ```toml
//! mode = "loose"              # or "strict": every call must match an entry
//! reviewers = "rule-backed"   # or "scripted": reviewer verdicts come from entries
//!
//! [[entry]]
//! key = "script/generator/1/0"   # stage[#item]/role/iteration/candidate
//! defect = "STR-1"               # rule id to violate, or "oversized-subtitle"
//! shot = 3
//!
//! [[entry]]
//! key = "keyframes#2/generator/1/*"
//! scores = { naturalness = 0.4 }
//!
//! [[entry]]
//! key = "clips/generator/*/1"
//! fail = "timeout"
//! ```
//!
//! Any key component may be `*`. A pattern without `#item` matches every
//! item of its stage. When several entries match, all of them contribute
//! defects; for single-valued fields the entry with the most literal
//! components wins, earlier entries breaking ties.

pub mod draft;
pub mod media;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    CallKey, Capability, GeneratedAsset, Provider, ProviderDescriptor, ProviderError, ProviderRequest,
    ProviderResponse,
};
use crate::digest::{canonical_json, content_id, sha256_hex};
use crate::guidelines::{
    check_content_with, check_shot_design, check_structure, check_style, check_voice_plan,
    estimate_speech_seconds, ContentChecker, ContentRules, Finding, RuleId, DEFAULT_WORDS_PER_MINUTE,
};
use crate::schema::{
    parse_document, serialize_script, AssetKind, CharacterDef, Feedback, GuidelineSet, Script, ShotDesign,
    Verdict, VoicePlan,
};
use crate::seed::derive_seed;

/// Defect name for a subtitle too long for its clip.
pub const OVERSIZED_SUBTITLE: &str = "oversized-subtitle";

/// Text-capability task names carried in `PromptSpec::metadata["task"]`.
pub mod task {
    pub const SCRIPT: &str = "script";
    pub const DESIGNS: &str = "designs";
    pub const VOICE_PLAN: &str = "voice-plan";
    pub const CHARACTER_PROMPT: &str = "character-prompt";
    pub const SHORTEN_SUBTITLE: &str = "shorten-subtitle";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioMode {
    Strict,
    #[default]
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReviewerMode {
    #[default]
    RuleBacked,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailDirective {
    Timeout,
    Refused,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct KeyPattern {
    stage: Option<String>,
    /// `None` (no `#item`) and `Some(None)` (`#*`) both match any item.
    item: Option<Option<String>>,
    role: Option<String>,
    iteration: Option<u32>,
    candidate: Option<u32>,
}

impl KeyPattern {
    pub fn matches(&self, key: &CallKey) -> bool {
        fn eq<T: PartialEq>(p: &Option<T>, v: &T) -> bool {
            p.as_ref().is_none_or(|p| p == v)
        }
        let item_ok = match &self.item {
            Some(Some(item)) => key.item.as_deref() == Some(item.as_str()),
            _ => true,
        };
        eq(&self.stage, &key.stage)
            && item_ok
            && eq(&self.role, &key.role)
            && eq(&self.iteration, &key.iteration)
            && eq(&self.candidate, &key.candidate)
    }

    fn specificity(&self) -> usize {
        [
            self.stage.is_some(),
            matches!(self.item, Some(Some(_))),
            self.role.is_some(),
            self.iteration.is_some(),
            self.candidate.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }
}

impl FromStr for KeyPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        let [head, role, iteration, candidate] = parts[..] else {
            return Err(format!("key `{s}` must be stage[#item]/role/iteration/candidate"));
        };
        fn wild(p: &str) -> Option<String> {
            (p != "*").then(|| p.to_string())
        }
        fn num(p: &str, what: &str, key: &str) -> Result<Option<u32>, String> {
            if p == "*" {
                return Ok(None);
            }
            p.parse().map(Some).map_err(|_| format!("key `{key}`: {what} `{p}` is not a number or `*`"))
        }
        let (stage, item) = match head.split_once('#') {
            Some((stage, item)) => (stage, Some(wild(item))),
            None => (head, None),
        };
        if stage.is_empty() || role.is_empty() {
            return Err(format!("key `{s}` has an empty component"));
        }
        Ok(Self {
            stage: wild(stage),
            item,
            role: wild(role),
            iteration: num(iteration, "iteration", s)?,
            candidate: num(candidate, "candidate", s)?,
        })
    }
}

impl fmt::Display for KeyPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn w<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "*".to_string(), T::to_string)
        }
        write!(f, "{}", w(&self.stage))?;
        if let Some(item) = &self.item {
            write!(f, "#{}", w(item))?;
        }
        write!(f, "/{}/{}/{}", w(&self.role), w(&self.iteration), w(&self.candidate))
    }
}

impl From<KeyPattern> for String {
    fn from(p: KeyPattern) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for KeyPattern {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub key: KeyPattern,
    /// Verbatim text response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Id given to the generated asset instead of its content hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<String>,
    /// Shot the defect targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<u32>,
    /// Design element a SHOT-1 defect removes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<FailDirective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<f64>,
}

impl ScenarioEntry {
    pub fn new(key: &str) -> Self {
        Self {
            key: key.parse().expect("valid key pattern"),
            text: None,
            asset_id: None,
            defect: None,
            shot: None,
            element: None,
            scores: BTreeMap::new(),
            verdict: None,
            fail: None,
            duration_seconds: None,
        }
    }

    pub fn defect(mut self, defect: &str, shot: Option<u32>) -> Self {
        self.defect = Some(defect.into());
        self.shot = shot;
        self
    }

    pub fn element(mut self, element: &str) -> Self {
        self.element = Some(element.into());
        self
    }

    pub fn score(mut self, axis: &str, value: f64) -> Self {
        self.scores.insert(axis.into(), value);
        self
    }

    pub fn fail(mut self, how: FailDirective) -> Self {
        self.fail = Some(how);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScenario {
    #[serde(default)]
    pub mode: ScenarioMode,
    #[serde(default)]
    pub reviewers: ReviewerMode,
    #[serde(default, rename = "entry", skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<ScenarioEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(String),
}

impl MockScenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for e in &s.entries {
            if let Some(d) = &e.defect {
                if d != OVERSIZED_SUBTITLE && d.parse::<RuleId>().is_err() {
                    return Err(ScenarioError::Parse(format!("entry `{}`: unknown defect `{d}`", e.key)));
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn with_entry(mut self, entry: ScenarioEntry) -> Self {
        self.entries.push(entry);
        self
    }

    pub fn digest(&self) -> String {
        sha256_hex(&canonical_json(self))
    }

    /// Every entry matching `key`, in file order.
    pub fn matching(&self, key: &CallKey) -> Vec<&ScenarioEntry> {
        self.entries.iter().filter(|e| e.key.matches(key)).collect()
    }

    /// Most specific entry matching `key`; in strict mode a miss is an error.
    pub fn resolve(&self, key: &CallKey) -> Result<Option<&ScenarioEntry>, ProviderError> {
        let best = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.key.matches(key))
            .max_by(|(ia, a), (ib, b)| a.key.specificity().cmp(&b.key.specificity()).then(ib.cmp(ia)))
            .map(|(_, e)| e);
        if best.is_none() && self.mode == ScenarioMode::Strict {
            return Err(ProviderError::MissingScenarioEntry { key: key.to_string() });
        }
        Ok(best)
    }

    fn first_with<'a, T>(&'a self, key: &CallKey, f: impl Fn(&'a ScenarioEntry) -> Option<T>) -> Option<T> {
        let mut hits: Vec<(usize, &ScenarioEntry)> =
            self.entries.iter().enumerate().filter(|(_, e)| e.key.matches(key)).collect();
        hits.sort_by(|(ia, a), (ib, b)| b.key.specificity().cmp(&a.key.specificity()).then(ia.cmp(ib)));
        hits.into_iter().find_map(|(_, e)| f(e))
    }
}

/// Mock backend for one capability.
pub struct MockProvider {
    descriptor: ProviderDescriptor,
    scenario: Arc<MockScenario>,
}

impl MockProvider {
    pub fn new(descriptor: ProviderDescriptor, scenario: Arc<MockScenario>) -> Self {
        Self { descriptor, scenario }
    }

    fn id(&self) -> &str {
        &self.descriptor.id
    }

    fn meta<'a>(&self, req: &'a ProviderRequest, key: &str) -> Result<&'a str, ProviderError> {
        req.prompt
            .meta(key)
            .ok_or_else(|| ProviderError::malformed(self.id(), format!("request lacks `{key}` metadata")))
    }

    fn meta_f64(&self, req: &ProviderRequest, key: &str, default: f64) -> Result<f64, ProviderError> {
        match req.prompt.meta(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ProviderError::malformed(self.id(), format!("`{key}` = `{v}` is not a number"))),
        }
    }

    fn draft_seed(&self, req: &ProviderRequest) -> u64 {
        req.prompt.meta("draft_seed").and_then(|s| s.parse().ok()).unwrap_or(req.seed)
    }

    fn script_from_meta(&self, req: &ProviderRequest) -> Result<Script, ProviderError> {
        parse_document(self.meta(req, "script")?.as_bytes())
            .map_err(|e| ProviderError::malformed(self.id(), format!("script metadata: {e}")))
    }

    fn text(&self, req: &ProviderRequest, defects: &[&ScenarioEntry]) -> Result<String, ProviderError> {
        let seed = self.draft_seed(req);
        match req.prompt.meta("task") {
            Some(task::SCRIPT) => {
                let sr = draft::ScriptRequest {
                    prompt: req.prompt.meta("user_prompt").unwrap_or(&req.prompt.body),
                    shots: self.meta(req, "target_shot_count")?.parse().map_err(|_| {
                        ProviderError::malformed(self.id(), "target_shot_count is not an integer")
                    })?,
                    clip_seconds: self.meta_f64(req, "target_clip_seconds", 5.0)?,
                    words_per_minute: self.meta_f64(req, "words_per_minute", DEFAULT_WORDS_PER_MINUTE)?,
                    seed,
                };
                let mut script = draft::clean_script(&sr);
                draft::apply_script_defects(&mut script, defects, &sr);
                Ok(String::from_utf8(serialize_script(&script)).expect("utf-8 json"))
            }
            Some(task::DESIGNS) => {
                let script = self.script_from_meta(req)?;
                let mut designs = draft::clean_designs(&script, seed);
                draft::apply_design_defects(&mut designs, defects, seed);
                Ok(String::from_utf8(canonical_json(&designs)).expect("utf-8 json"))
            }
            Some(task::VOICE_PLAN) => {
                let script = self.script_from_meta(req)?;
                let list = |k: &str| -> Vec<String> {
                    req.prompt
                        .meta(k)
                        .unwrap_or("")
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                };
                let mut plan =
                    draft::clean_voice_plan(&script, &list("music_catalog"), &list("emotions"), seed);
                draft::apply_voice_defects(&mut plan, defects);
                Ok(String::from_utf8(canonical_json(&plan)).expect("utf-8 json"))
            }
            Some(task::CHARACTER_PROMPT) => {
                let c: CharacterDef = serde_json::from_str(self.meta(req, "character")?)
                    .map_err(|e| ProviderError::malformed(self.id(), e))?;
                Ok(draft::character_prompt(&c))
            }
            Some(task::SHORTEN_SUBTITLE) => {
                let target = self.meta_f64(req, "target_seconds", 0.0)?;
                let wpm = self.meta_f64(req, "words_per_minute", DEFAULT_WORDS_PER_MINUTE)?;
                Ok(crate::guidelines::truncate_to_fit(&req.prompt.body, target, wpm))
            }
            _ => Ok(req.prompt.body.clone()),
        }
    }

    fn seeded_color(&self, req: &ProviderRequest) -> [u8; 3] {
        let h = derive_seed(req.seed, &[crate::seed::fnv1a(&req.prompt.body)]);
        [(h >> 16) as u8, (h >> 8) as u8, h as u8]
    }
}

impl Provider for MockProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn call(&self, req: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        req.prompt
            .validate()
            .map_err(|e| ProviderError::Refused { provider: self.id().to_string(), detail: e.to_string() })?;
        let key = &req.key;
        self.scenario.resolve(key)?;
        if let Some(how) = self.scenario.first_with(key, |e| e.fail) {
            let provider = self.id().to_string();
            let detail = format!("scripted failure for `{key}`");
            return Err(match how {
                FailDirective::Timeout => ProviderError::Timeout { provider, attempts: 1, detail },
                FailDirective::Refused => ProviderError::Refused { provider, detail },
                FailDirective::Malformed => ProviderError::MalformedResponse { provider, detail },
            });
        }
        let label = self.scenario.first_with(key, |e| e.asset_id.as_deref());
        let duration = self.scenario.first_with(key, |e| e.duration_seconds);
        let hints: BTreeMap<String, f64> = self
            .scenario
            .first_with(key, |e| (!e.scores.is_empty()).then_some(&e.scores))
            .cloned()
            .unwrap_or_default();
        let with_hints = |mut a: GeneratedAsset| {
            a.hints = hints.clone();
            a.provider = self.id().to_string();
            ProviderResponse::asset(a)
        };

        match self.descriptor.capability {
            Capability::Text => {
                if let Some(text) = self.scenario.first_with(key, |e| e.text.clone()) {
                    return Ok(ProviderResponse::text(text));
                }
                let defects: Vec<&ScenarioEntry> =
                    self.scenario.matching(key).into_iter().filter(|e| e.defect.is_some()).collect();
                Ok(ProviderResponse::text(self.text(req, &defects)?))
            }
            Capability::T2i => {
                let bytes = media::solid_ppm(self.seeded_color(req));
                Ok(with_hints(GeneratedAsset::from_bytes(AssetKind::Image, bytes, label, None)))
            }
            Capability::I2v => {
                let seconds = duration.unwrap_or(self.meta_f64(req, "clip_seconds", 5.0)?);
                let frames = match req.prompt.meta("frames") {
                    Some(n) => n
                        .parse()
                        .map_err(|_| ProviderError::malformed(self.id(), "frames is not an integer"))?,
                    None => ((seconds * media::VIDEO_FPS as f64).round() as usize).max(2),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
                let base = self.seeded_color(req);
                let video = media::MockVideo {
                    fps: media::VIDEO_FPS,
                    duration_seconds: seconds,
                    frames: (0..frames)
                        .map(|i| {
                            let j: u8 = rng.gen_range(0..8);
                            [
                                base[0].wrapping_add(i as u8 * 9),
                                base[1].wrapping_add(j),
                                base[2].wrapping_sub(i as u8 * 5),
                            ]
                        })
                        .collect(),
                };
                Ok(with_hints(GeneratedAsset::from_bytes(
                    AssetKind::Video,
                    video.encode(),
                    label,
                    Some(seconds),
                )))
            }
            Capability::T2a => {
                let wpm = self.meta_f64(req, "words_per_minute", DEFAULT_WORDS_PER_MINUTE)?;
                let seconds = duration.unwrap_or_else(|| estimate_speech_seconds(&req.prompt.body, wpm));
                Ok(with_hints(GeneratedAsset::from_bytes(
                    AssetKind::Audio,
                    media::tone_wav(seconds),
                    label,
                    Some(seconds),
                )))
            }
            Capability::AdapterTrain => {
                let ids: Vec<String> = req.prompt.attachments.iter().map(|a| a.id.clone()).collect();
                let captions: Vec<String> = req.prompt.body.lines().map(str::to_string).collect();
                let bytes = media::adapter_manifest(&ids, &captions, req.seed);
                Ok(with_hints(GeneratedAsset::from_bytes(AssetKind::ModelAdapter, bytes, label, None)))
            }
        }
    }
}

/// What a mock examiner is asked to judge.
pub enum Examinable<'a> {
    Script { script: &'a Script, expected_shots: usize, content: Option<&'a ContentChecker> },
    Designs(&'a [ShotDesign]),
    VoicePlan { plan: &'a VoicePlan, music: &'a BTreeSet<String>, emotions: &'a BTreeSet<String> },
    Candidate(&'a GeneratedAsset),
}

fn default_checker() -> &'static ContentChecker {
    static CHECKER: std::sync::OnceLock<ContentChecker> = std::sync::OnceLock::new();
    CHECKER.get_or_init(|| ContentRules::default().compile().expect("default content rules compile"))
}

/// Rule-backed findings for `artifact`, restricted to the rules of `guidelines`.
pub fn rule_findings(artifact: &Examinable<'_>, guidelines: &GuidelineSet) -> Vec<Finding> {
    let mut all = match artifact {
        Examinable::Script { script, expected_shots, content } => {
            let mut f = Vec::new();
            if guidelines.rules.iter().any(|r| r.rule.code().starts_with("STR")) {
                f.extend(check_structure(script));
            }
            if guidelines.rules.iter().any(|r| r.rule.code().starts_with("CON")) {
                f.extend(check_content_with(
                    script,
                    match content {
                        Some(c) => c,
                        None => default_checker(),
                    },
                ));
            }
            if guidelines.rules.iter().any(|r| r.rule.code().starts_with("STY")) {
                f.extend(check_style(script, *expected_shots));
            }
            f
        }
        Examinable::Designs(designs) => designs.iter().flat_map(check_shot_design).collect(),
        Examinable::VoicePlan { plan, music, emotions } => check_voice_plan(plan, music, emotions),
        Examinable::Candidate(_) => Vec::new(),
    };
    all.retain(|f| guidelines.has_rule(f.rule_id));
    all
}

/// Seeded default score in `[0.9, 1.0)` for an unscripted axis.
fn default_score(seed: u64, axis: &str) -> f64 {
    let h = derive_seed(seed, &[crate::seed::fnv1a(axis)]);
    0.9 + (h >> 11) as f64 / (1u64 << 53) as f64 * 0.1
}

/// Mock examination. Rule-backed mode runs the deterministic checkers;
/// scripted mode returns the matching entry's verdict, findings and scores
/// verbatim. Candidates are always scored per axis: scripted evaluator
/// scores first, then the producer's hints, then a seeded default.
pub fn mock_examiner(
    scenario: &MockScenario,
    key: &CallKey,
    reviewer_id: &str,
    artifact: &Examinable<'_>,
    guidelines: &GuidelineSet,
    seed: u64,
) -> Result<Feedback, ProviderError> {
    let scripted = scenario.reviewers == ReviewerMode::Scripted;
    let entry = if scripted { scenario.resolve(key)? } else { None };

    if let Examinable::Candidate(asset) = artifact {
        let entry = match entry {
            Some(e) => Some(e),
            None => scenario.first_with(key, Some),
        };
        let scores = guidelines
            .axes
            .iter()
            .map(|axis| {
                let v = entry
                    .and_then(|e| e.scores.get(axis))
                    .or_else(|| asset.hints.get(axis))
                    .copied()
                    .unwrap_or_else(|| default_score(derive_seed(seed, &[key.candidate as u64]), axis));
                (axis.clone(), v)
            })
            .collect();
        return Ok(Feedback::revise(reviewer_id, Vec::new()).with_scores(scores));
    }

    match entry {
        Some(e) if scripted => {
            let findings: Vec<Finding> = e
                .defect
                .as_deref()
                .and_then(|d| d.parse::<RuleId>().ok())
                .map(|r| vec![Finding::new(r, e.shot, "scripted finding")])
                .unwrap_or_default();
            let verdict =
                e.verdict.unwrap_or(if findings.is_empty() { Verdict::Approve } else { Verdict::Revise });
            let mut fb = match verdict {
                Verdict::Approve => Feedback::approve(reviewer_id),
                Verdict::Revise => Feedback::revise(reviewer_id, findings),
            };
            fb.scores = e.scores.clone();
            Ok(fb)
        }
        _ => Ok(Feedback::from_findings(reviewer_id, rule_findings(artifact, guidelines))),
    }
}

/// Content id of arbitrary bytes; kept here so scenario authors can predict ids.
pub fn asset_id_for(bytes: &[u8]) -> String {
    content_id(bytes)
}
