//! Typed stage outputs and their on-disk form.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::RunError;
use crate::digest::canonical_json;
use crate::schema::{
    parse_document, serialize_script, AssetRef, Script, ShotDesign, StoryOutput, UserPrompt, VoicePlan,
};
use crate::stages::{
    run_animation_stage, run_audio_stage, run_character_stage, run_keyframe_stage, run_script_stage,
    run_shot_stage, CharacterAssets, CharacterOutput, FitOutcome, LoopRecord, LoopSummary, StageContext,
    StageError, StageId,
};

pub const SCRIPT_FINAL: &str = "script.final.json";
pub const DESIGNS: &str = "designs/designs.json";
pub const CHARACTERS: &str = "characters/characters.json";
pub const KEYFRAMES: &str = "keyframes/keyframes.json";
pub const CLIPS: &str = "clips/clips.json";
pub const VOICE_PLAN: &str = "audio/voice_plan.json";
pub const FITS: &str = "audio/fits.json";
pub const TIMELINE: &str = "timeline.json";

/// Persisted form of one shot's subtitle fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub shot: u32,
    pub original_subtitle: String,
    pub subtitle: String,
    pub attempts: u32,
    pub audio_seconds: f64,
    pub clip_seconds: f64,
    pub fits: bool,
}

impl From<&FitOutcome> for FitSummary {
    fn from(f: &FitOutcome) -> Self {
        Self {
            shot: f.shot,
            original_subtitle: f.original_subtitle.clone(),
            subtitle: f.subtitle.clone(),
            attempts: f.attempts,
            audio_seconds: f.audio_seconds,
            clip_seconds: f.clip_seconds,
            fits: f.fits,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioProducts {
    pub plan: VoicePlan,
    pub fits: Vec<FitSummary>,
    pub story: StoryOutput,
}

/// Outputs of the stages run so far.
#[derive(Debug, Clone, Default)]
pub struct Products {
    pub script: Option<Script>,
    pub designs: Option<Vec<ShotDesign>>,
    pub characters: Option<CharacterOutput>,
    pub keyframes: Option<Vec<AssetRef>>,
    pub clips: Option<Vec<AssetRef>>,
    pub audio: Option<AudioProducts>,
    pub summaries: Vec<LoopSummary>,
}

/// Files and warnings produced by one stage.
#[derive(Debug, Default)]
pub struct StageFiles {
    pub files: Vec<(String, Vec<u8>)>,
    pub warnings: Vec<String>,
}

impl StageFiles {
    fn json<T: Serialize + ?Sized>(&mut self, path: &str, value: &T) {
        self.files.push((path.to_string(), canonical_json(value)));
    }

    fn records(&mut self, stage: StageId, records: &[LoopRecord], products: &mut Products) {
        let summaries: Vec<LoopSummary> = records.iter().map(|r| r.summary.clone()).collect();
        for r in records {
            self.files.push((r.path(), r.trace.clone()));
        }
        self.json(&summary_path(stage), &summaries);
        products.summaries.extend(summaries);
    }
}

fn summary_path(stage: StageId) -> String {
    format!("traces/{stage}/summary.json")
}

fn need<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T, StageError> {
    v.as_ref().ok_or_else(|| StageError::Precondition(format!("{what} is not available")))
}

/// Runs `stage` on the products so far and stores its outputs in `products`.
pub fn run_stage(
    ctx: &StageContext,
    prompt: &UserPrompt,
    stage: StageId,
    products: &mut Products,
) -> Result<StageFiles, StageError> {
    let mut out = StageFiles::default();
    match stage {
        StageId::Script => {
            let s = run_script_stage(ctx, prompt)?;
            for (i, d) in s.drafts.iter().enumerate() {
                out.files.push((format!("script.v{}.json", i + 1), serialize_script(d)));
            }
            out.files.push((SCRIPT_FINAL.into(), serialize_script(&s.script)));
            out.warnings = s.warnings;
            out.records(stage, &[s.record], products);
            products.script = Some(s.script);
        }
        StageId::Shots => {
            let s = run_shot_stage(ctx, need(&products.script, "script")?)?;
            out.json(DESIGNS, &s.designs);
            out.warnings = s.warnings;
            out.records(stage, &[s.record], products);
            products.designs = Some(s.designs);
        }
        StageId::Characters => {
            let mut c = run_character_stage(ctx, need(&products.script, "script")?)?;
            out.files.append(&mut c.files);
            out.json(CHARACTERS, &c.assets);
            out.warnings = std::mem::take(&mut c.warnings);
            let records = std::mem::take(&mut c.records);
            out.records(stage, &records, products);
            products.characters = Some(c);
        }
        StageId::Keyframes => {
            let mut m = run_keyframe_stage(
                ctx,
                need(&products.script, "script")?,
                need(&products.designs, "shot designs")?,
                need(&products.characters, "character assets")?,
            )?;
            out.files.append(&mut m.files);
            out.json(KEYFRAMES, &m.assets);
            out.warnings = m.warnings;
            out.records(stage, &m.records, products);
            products.keyframes = Some(m.assets);
        }
        StageId::Animation => {
            let mut m = run_animation_stage(
                ctx,
                need(&products.script, "script")?,
                need(&products.designs, "shot designs")?,
                need(&products.characters, "character assets")?,
                need(&products.keyframes, "keyframes")?,
                prompt.target_clip_seconds,
            )?;
            out.files.append(&mut m.files);
            out.json(CLIPS, &m.assets);
            out.warnings = m.warnings;
            out.records(stage, &m.records, products);
            products.clips = Some(m.assets);
        }
        StageId::Audio => {
            let mut a =
                run_audio_stage(ctx, need(&products.script, "script")?, need(&products.clips, "clips")?)?;
            let fits: Vec<FitSummary> = a.fits.iter().map(FitSummary::from).collect();
            out.files.append(&mut a.files);
            out.json(VOICE_PLAN, &a.plan);
            out.json(FITS, &fits);
            out.json(TIMELINE, &a.story);
            out.warnings = a.warnings;
            out.records(stage, &a.records, products);
            products.audio = Some(AudioProducts { plan: a.plan, fits, story: a.story });
        }
    }
    Ok(out)
}

fn read_json<T: DeserializeOwned>(run_dir: &Path, rel: &str) -> Result<T, RunError> {
    let path = run_dir.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| RunError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::State(format!("{rel}: {e}")))
}

/// Reloads the outputs of a completed stage from the run directory.
pub fn load_stage(run_dir: &Path, stage: StageId, products: &mut Products) -> Result<(), RunError> {
    match stage {
        StageId::Script => {
            let path = run_dir.join(SCRIPT_FINAL);
            let bytes = std::fs::read(&path).map_err(|e| RunError::io(&path, e))?;
            products.script =
                Some(parse_document(&bytes).map_err(|e| RunError::State(format!("{SCRIPT_FINAL}: {e}")))?);
        }
        StageId::Shots => products.designs = Some(read_json(run_dir, DESIGNS)?),
        StageId::Characters => {
            let assets: BTreeMap<String, CharacterAssets> = read_json(run_dir, CHARACTERS)?;
            products.characters = Some(CharacterOutput { assets, ..CharacterOutput::default() });
        }
        StageId::Keyframes => products.keyframes = Some(read_json(run_dir, KEYFRAMES)?),
        StageId::Animation => products.clips = Some(read_json(run_dir, CLIPS)?),
        StageId::Audio => {
            products.audio = Some(AudioProducts {
                plan: read_json(run_dir, VOICE_PLAN)?,
                fits: read_json(run_dir, FITS)?,
                story: read_json(run_dir, TIMELINE)?,
            })
        }
    }
    let summaries: Vec<LoopSummary> = read_json(run_dir, &summary_path(stage))?;
    products.summaries.extend(summaries);
    Ok(())
}
