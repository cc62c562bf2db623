//! Typed artifacts exchanged between pipeline stages.
//!
//! Every value here is immutable once built and validated; stages hand them
//! to each other by value and persist them through [`crate::digest::canonical_json`].

mod assets;
mod design;
mod feedback;
mod script;
mod story;

pub use assets::{AssetKind, AssetRef, PromptKind, PromptSpec};
pub use design::{DesignElement, ShotDesign};
pub use feedback::{Feedback, GuidelineSet, RuleParam, Verdict};
pub use script::{
    location_pair, parse_document, parse_script, serialize_script, CharacterDef, ParseError, SchemaError,
    Script, Shot, SCHEMA_VERSION,
};
pub use story::{validate_story_output, Cue, StoryOutput, StoryPair, StoryViolation, VoiceLine, VoicePlan};

use serde::{Deserialize, Serialize};

/// The one-line request plus the story length it asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrompt {
    pub text: String,
    pub target_shot_count: u32,
    pub target_clip_seconds: f64,
}

impl UserPrompt {
    pub fn new(
        text: impl Into<String>,
        target_shot_count: u32,
        target_clip_seconds: f64,
    ) -> Result<Self, SchemaError> {
        let prompt = Self { text: text.into(), target_shot_count, target_clip_seconds };
        prompt.validate()?;
        Ok(prompt)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.text.trim().is_empty() {
            return Err(SchemaError::Shape("prompt text is empty".into()));
        }
        if self.target_shot_count == 0 {
            return Err(SchemaError::NoShots);
        }
        if !(self.target_clip_seconds > 0.0) || !self.target_clip_seconds.is_finite() {
            return Err(SchemaError::Shape(format!(
                "target_clip_seconds must be positive, got {}",
                self.target_clip_seconds
            )));
        }
        Ok(())
    }
}
