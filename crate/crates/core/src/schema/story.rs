use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AssetKind, AssetRef, SchemaError, Script};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoiceLine {
    pub shot_index: u32,
    pub voice_id: String,
    pub emotion: String,
}

/// Story-wide music choice plus per-shot voice and emotion (`S_A`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoicePlan {
    pub background_music_id: String,
    pub per_shot: Vec<VoiceLine>,
}

impl VoicePlan {
    pub fn line(&self, shot: u32) -> Option<&VoiceLine> {
        self.per_shot.iter().find(|l| l.shot_index == shot)
    }

    /// Checks that every shot `1..=shot_count` is covered exactly once.
    pub fn validate(&self, shot_count: usize) -> Result<(), SchemaError> {
        let mut seen = BTreeSet::new();
        for line in &self.per_shot {
            if line.shot_index == 0 || line.shot_index as usize > shot_count {
                return Err(SchemaError::Shape(format!(
                    "voice plan references shot {} outside 1..={shot_count}",
                    line.shot_index
                )));
            }
            if !seen.insert(line.shot_index) {
                return Err(SchemaError::Shape(format!("voice plan covers shot {} twice", line.shot_index)));
            }
        }
        if seen.len() != shot_count {
            return Err(SchemaError::Shape(format!(
                "voice plan covers {} of {shot_count} shots",
                seen.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryPair {
    pub clip: AssetRef,
    pub audio: AssetRef,
}

/// One timeline entry; the voice-over starts with its clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub shot_index: u32,
    pub start_seconds: f64,
    pub clip_uri: String,
    pub clip_seconds: f64,
    pub audio_uri: String,
    pub audio_seconds: f64,
}

/// The final `{ {V_j, A_j} }` pairs and their playback timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryOutput {
    pub background_music_id: String,
    pub pairs: Vec<StoryPair>,
    pub timeline: Vec<Cue>,
}

impl StoryOutput {
    /// Lays the pairs end to end, each cue starting where the previous clip ends.
    pub fn assemble(background_music_id: impl Into<String>, pairs: Vec<StoryPair>) -> Self {
        let mut start = 0.0;
        let timeline = pairs
            .iter()
            .enumerate()
            .map(|(pos, p)| {
                let clip_seconds = p.clip.duration_seconds.unwrap_or(0.0);
                let cue = Cue {
                    shot_index: pos as u32 + 1,
                    start_seconds: start,
                    clip_uri: p.clip.uri.clone(),
                    clip_seconds,
                    audio_uri: p.audio.uri.clone(),
                    audio_seconds: p.audio.duration_seconds.unwrap_or(0.0),
                };
                start += clip_seconds;
                cue
            })
            .collect();
        Self { background_music_id: background_music_id.into(), pairs, timeline }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoryViolation {
    PairCount { found: usize, expected: usize },
    CueCount { found: usize, expected: usize },
    WrongKind { shot: u32, role: &'static str, kind: AssetKind },
    MissingDuration { shot: u32, role: &'static str },
    CueOrder { shot: u32 },
    AudioOverrun { shot: u32, audio: f64, clip: f64, slack: f64 },
}

impl fmt::Display for StoryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoryViolation::PairCount { found, expected } => {
                write!(f, "pair count {found} ≠ {expected}")
            }
            StoryViolation::CueCount { found, expected } => {
                write!(f, "cue count {found} ≠ {expected}")
            }
            StoryViolation::WrongKind { shot, role, kind } => {
                write!(f, "shot {shot}: {role} asset has kind {kind}")
            }
            StoryViolation::MissingDuration { shot, role } => {
                write!(f, "shot {shot}: {role} asset has no duration")
            }
            StoryViolation::CueOrder { shot } => {
                write!(f, "shot {shot}: cue offset does not increase")
            }
            StoryViolation::AudioOverrun { shot, audio, clip, slack } => {
                write!(f, "shot {shot}: audio {audio:.3} s exceeds clip {clip:.3} s + slack {slack:.3} s")
            }
        }
    }
}

/// Checks the output contract: N pairs, increasing cue offsets, audio fits its clip.
pub fn validate_story_output(out: &StoryOutput, script: &Script, slack_seconds: f64) -> Vec<StoryViolation> {
    let expected = script.shot_count();
    let mut v = Vec::new();
    if out.pairs.len() != expected {
        v.push(StoryViolation::PairCount { found: out.pairs.len(), expected });
    }
    if out.timeline.len() != out.pairs.len() {
        v.push(StoryViolation::CueCount { found: out.timeline.len(), expected: out.pairs.len() });
    }
    for (pos, pair) in out.pairs.iter().enumerate() {
        let shot = pos as u32 + 1;
        if pair.clip.kind != AssetKind::Video {
            v.push(StoryViolation::WrongKind { shot, role: "clip", kind: pair.clip.kind });
        }
        if pair.audio.kind != AssetKind::Audio {
            v.push(StoryViolation::WrongKind { shot, role: "audio", kind: pair.audio.kind });
        }
        match (pair.clip.duration_seconds, pair.audio.duration_seconds) {
            (Some(clip), Some(audio)) => {
                if audio > clip + slack_seconds {
                    v.push(StoryViolation::AudioOverrun { shot, audio, clip, slack: slack_seconds });
                }
            }
            (clip, audio) => {
                if clip.is_none() {
                    v.push(StoryViolation::MissingDuration { shot, role: "clip" });
                }
                if audio.is_none() {
                    v.push(StoryViolation::MissingDuration { shot, role: "audio" });
                }
            }
        }
    }
    for w in out.timeline.windows(2) {
        if !(w[1].start_seconds > w[0].start_seconds) {
            v.push(StoryViolation::CueOrder { shot: w[1].shot_index });
        }
    }
    v
}
