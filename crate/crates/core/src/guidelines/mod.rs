//! Deterministic rule checkers for scripts, shot designs and voice plans.
//!
//! Every checker is a pure function returning findings in canonical order
//! (shot index, then rule id, then message), so identical inputs give
//! identical finding lists and traces replay byte-for-byte.

mod content;
mod repair;
mod shot;
mod speech;
mod structure;
mod style;
mod voice;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::schema::Script;

pub use content::{check_content, check_content_with, ContentChecker, ContentRules};
pub use repair::{suggest_transitional_shot, RepairError, TransitionTemplate};
pub use shot::check_shot_design;
pub use speech::{
    estimate_speech_seconds, truncate_to_fit, truncate_words, word_capacity, DEFAULT_WORDS_PER_MINUTE,
};
pub use structure::check_structure;
pub use style::{check_style, check_style_with, StyleNotice, SubtitleAligner};
pub use voice::check_voice_plan;

/// Evaluation axis registries for the image and video guides.
pub mod axes {
    pub const VISUAL_QUALITY: &str = "visual_quality";
    pub const NATURALNESS: &str = "naturalness";
    pub const PROMPT_CONSISTENCY: &str = "prompt_consistency";
    pub const SUBJECT_CONSISTENCY: &str = "subject_consistency";
    pub const DYNAMICS: &str = "dynamics";

    pub const IMAGE: [&str; 3] = [VISUAL_QUALITY, NATURALNESS, PROMPT_CONSISTENCY];
    pub const VIDEO: [&str; 5] =
        [VISUAL_QUALITY, NATURALNESS, PROMPT_CONSISTENCY, SUBJECT_CONSISTENCY, DYNAMICS];
}

/// The closed rule registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "STR-1")]
    Str1,
    #[serde(rename = "STR-2")]
    Str2,
    #[serde(rename = "STR-3")]
    Str3,
    #[serde(rename = "CON-1")]
    Con1,
    #[serde(rename = "CON-2")]
    Con2,
    #[serde(rename = "STY-1")]
    Sty1,
    #[serde(rename = "STY-2")]
    Sty2,
    #[serde(rename = "STY-3")]
    Sty3,
    #[serde(rename = "STY-4")]
    Sty4,
    #[serde(rename = "SHOT-1")]
    Shot1,
    #[serde(rename = "VOI-1")]
    Voi1,
    #[serde(rename = "VOI-2")]
    Voi2,
}

impl RuleId {
    pub const ALL: [RuleId; 12] = [
        RuleId::Str1,
        RuleId::Str2,
        RuleId::Str3,
        RuleId::Con1,
        RuleId::Con2,
        RuleId::Sty1,
        RuleId::Sty2,
        RuleId::Sty3,
        RuleId::Sty4,
        RuleId::Shot1,
        RuleId::Voi1,
        RuleId::Voi2,
    ];

    pub fn code(self) -> &'static str {
        match self {
            RuleId::Str1 => "STR-1",
            RuleId::Str2 => "STR-2",
            RuleId::Str3 => "STR-3",
            RuleId::Con1 => "CON-1",
            RuleId::Con2 => "CON-2",
            RuleId::Sty1 => "STY-1",
            RuleId::Sty2 => "STY-2",
            RuleId::Sty3 => "STY-3",
            RuleId::Sty4 => "STY-4",
            RuleId::Shot1 => "SHOT-1",
            RuleId::Voi1 => "VOI-1",
            RuleId::Voi2 => "VOI-2",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            RuleId::Str1 => "same-location-adjacent",
            RuleId::Str2 => "adjacent-location-jump",
            RuleId::Str3 => "same-character-adjacent",
            RuleId::Con1 => "multi-action-shot",
            RuleId::Con2 => "fine-detail-content",
            RuleId::Sty1 => "missing-title",
            RuleId::Sty2 => "missing-characters",
            RuleId::Sty3 => "shot-field-missing",
            RuleId::Sty4 => "subtitle-misaligned",
            RuleId::Shot1 => "element-missing",
            RuleId::Voi1 => "music-unavailable",
            RuleId::Voi2 => "emotion-invalid",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.code())
    }
}

impl FromStr for RuleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleId::ALL
            .into_iter()
            .find(|r| r.code() == s || r.slug() == s)
            .ok_or_else(|| format!("unknown rule id `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: RuleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot_index: Option<u32>,
    pub message: String,
}

impl Finding {
    pub fn new(rule_id: RuleId, shot_index: Option<u32>, message: impl Into<String>) -> Self {
        Self { rule_id, shot_index, message: message.into() }
    }

    pub fn at(rule_id: RuleId, shot: u32, message: impl Into<String>) -> Self {
        Self::new(rule_id, Some(shot), message)
    }
}

/// Linter line format: `<RULE-ID> shot=<n> <message>`, with `shot=-` for script-wide findings.
impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shot_index {
            Some(n) => write!(f, "{} shot={} {}", self.rule_id, n, self.message),
            None => write!(f, "{} shot=- {}", self.rule_id, self.message),
        }
    }
}

/// Structure, content and style findings for a standalone script, in
/// canonical order. `n_expected` defaults to the script's own shot count.
pub fn lint_script(script: &Script, n_expected: Option<usize>, content: &ContentChecker) -> Vec<Finding> {
    let mut out = check_structure(script);
    out.extend(check_content_with(script, content));
    out.extend(check_style(script, n_expected.unwrap_or(script.shot_count())));
    canonical_order(&mut out);
    out
}

pub(crate) fn canonical_order(findings: &mut [Finding]) {
    findings.sort_by(|a, b| {
        (a.shot_index.unwrap_or(0), a.rule_id, &a.message).cmp(&(
            b.shot_index.unwrap_or(0),
            b.rule_id,
            &b.message,
        ))
    });
}
