use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::agents::{caption_for, pool_members, view_label, AxisRefiner, MediaEvaluator, PoolMember};
use super::{Agent, LoopRecord, StageContext, StageError, StageId};
use crate::digest::content_id;
use crate::engine::{run_pooled_loop, Generate, LoopConfig, LoopTrace};
use crate::providers::mock::media::{sample_frame_indices, solid_ppm, MockVideo};
use crate::providers::mock::task;
use crate::providers::{train_adapter_hook, CallKey, Capability, GeneratedAsset, ProviderRequest};
use crate::schema::{AssetKind, AssetRef, CharacterDef, GuidelineSet, PromptKind, PromptSpec, Script};
use crate::seed::loop_seed;

/// Reference media for one character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterAssets {
    pub character_id: String,
    pub portrait_prompt: String,
    pub portrait: AssetRef,
    pub turnaround: AssetRef,
    /// Frames sampled from the turnaround clip, paired with `captions`.
    pub frames: Vec<AssetRef>,
    pub captions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter: Option<AssetRef>,
}

#[derive(Debug, Clone, Default)]
pub struct CharacterOutput {
    pub assets: BTreeMap<String, CharacterAssets>,
    /// `(relative path, bytes)` of every produced file.
    pub files: Vec<(String, Vec<u8>)>,
    pub records: Vec<LoopRecord>,
    pub warnings: Vec<String>,
}

impl CharacterOutput {
    /// Cast with `lora_ref` filled from trained adapters.
    pub fn cast(&self, script: &Script) -> Vec<CharacterDef> {
        script
            .characters
            .iter()
            .map(|c| {
                let mut c = c.clone();
                if let Some(a) = self.assets.get(&c.id).and_then(|a| a.adapter.as_ref()) {
                    c.lora_ref = Some(a.id.clone());
                }
                c
            })
            .collect()
    }
}

pub(crate) fn pooled(
    ctx: &StageContext,
    stage: StageId,
    capability: Capability,
    item: &str,
    p1: PromptSpec,
) -> Result<LoopTrace<GeneratedAsset>, StageError> {
    let settings = &ctx.settings;
    let (kind, guidelines, budget, agent) = match capability {
        Capability::T2i => (AssetKind::Image, GuidelineSet::image(), settings.budgets.t2i, Agent::T2i3e),
        _ => (AssetKind::Video, GuidelineSet::video(), settings.budgets.i2v, Agent::I2v3e),
    };
    let budget = if settings.enabled(agent) { budget } else { 1 };
    let members: Vec<PoolMember> = pool_members(ctx, capability, stage, item, kind)
        .map_err(|source| StageError::Provider { stage, source: Box::new(source) })?;
    let pool: Vec<&dyn Generate<GeneratedAsset>> =
        members.iter().map(|m| m as &dyn Generate<GeneratedAsset>).collect();
    let evaluator = MediaEvaluator { ctx, stage, item: item.to_string() };
    let mut cfg = LoopConfig::new(format!("{stage}.{item}"), budget, guidelines)
        .with_seed(loop_seed(ctx.run_seed, stage.as_str(), item))
        .with_policy(settings.policy);
    cfg.approve_threshold = settings.approve_threshold;
    cfg.parallel_fan_out = settings.parallel_pool;
    run_pooled_loop(&pool, &evaluator, &AxisRefiner { threshold: settings.approve_threshold }, p1, &cfg)
        .map_err(|source| StageError::Loop { stage, source: Box::new(source) })
}

fn portrait_prompt(ctx: &StageContext, c: &CharacterDef) -> Result<String, StageError> {
    let stage = StageId::Characters;
    let provider = ctx
        .hub
        .primary(Capability::Text)
        .map_err(|source| StageError::Provider { stage, source: Box::new(source) })?;
    let request = ProviderRequest {
        key: CallKey::new(stage.as_str(), "prompt-writer", 1, 0).with_item(&c.id),
        prompt: PromptSpec::text(format!(
            "Write a text-to-image prompt for a full-body reference portrait of {}: {}.",
            c.name, c.appearance
        ))
        .with_meta("task", task::CHARACTER_PROMPT)
        .with_meta("character", serde_json::to_string(c).expect("character json")),
        seed: loop_seed(ctx.run_seed, stage.as_str(), &c.id),
    };
    let id = provider.descriptor().id.clone();
    ctx.hub
        .invoke(provider.as_ref(), &request)
        .and_then(|r| r.expect_text(&id))
        .map_err(|source| StageError::Provider { stage, source: Box::new(source) })
}

fn one_character(ctx: &StageContext, c: &CharacterDef, out: &mut CharacterOutput) -> Result<(), StageError> {
    let stage = StageId::Characters;
    let settings = &ctx.settings;
    let dir = format!("characters/{}", c.id);

    let prompt_text = portrait_prompt(ctx, c)?;
    let item = format!("{}.portrait", c.id);
    let trace =
        pooled(ctx, stage, Capability::T2i, &item, PromptSpec::new(PromptKind::T2i, prompt_text.clone()))?;
    out.warnings.extend(trace.warnings.iter().map(|w| format!("{item}: {w}")));
    out.records.push(LoopRecord::new(stage, Some(&item), &trace));
    let mut portrait = trace.final_artifact;
    portrait.asset.uri = format!("{dir}/portrait.ppm");
    out.files.push((portrait.asset.uri.clone(), portrait.bytes.clone()));

    let item = format!("{}.turnaround", c.id);
    let frames_wanted = ((settings.turnaround_seconds * 4.0).round() as usize).max(settings.frame_count);
    let p1 = PromptSpec::new(
        PromptKind::I2v,
        format!(
            "{} ({}) turns slowly through a full circle in place, plain neutral backdrop, steady camera.",
            c.name, c.appearance
        ),
    )
    .with_attachment(portrait.asset.clone())
    .with_meta("clip_seconds", settings.turnaround_seconds.to_string())
    .with_meta("frames", frames_wanted.to_string());
    let trace = pooled(ctx, stage, Capability::I2v, &item, p1)?;
    out.warnings.extend(trace.warnings.iter().map(|w| format!("{item}: {w}")));
    out.records.push(LoopRecord::new(stage, Some(&item), &trace));
    let mut turnaround = trace.final_artifact;
    turnaround.asset.uri = format!("{dir}/turnaround.mvid");
    out.files.push((turnaround.asset.uri.clone(), turnaround.bytes.clone()));

    let mut frames = Vec::new();
    let mut captions = Vec::new();
    match MockVideo::decode(&turnaround.bytes) {
        Ok(video) => {
            let total = video.frames.len();
            for (n, idx) in sample_frame_indices(total, settings.frame_count).into_iter().enumerate() {
                let bytes = solid_ppm(video.frames[idx]);
                let mut r = AssetRef::new(content_id(&bytes), AssetKind::Image);
                r.uri = format!("{dir}/frame-{:02}.ppm", n + 1);
                out.files.push((r.uri.clone(), bytes));
                let angle = idx as f64 * 360.0 / total as f64;
                captions.push(caption_for(&settings.caption_template, c, view_label(angle)));
                frames.push(r);
            }
        }
        Err(e) => out.warnings.push(format!(
            "{}: turnaround is not a decodable placeholder clip ({e}); frame sampling skipped",
            c.id
        )),
    }

    let mut adapter = None;
    if settings.train_adapters {
        let trained = ctx.hub.primary(Capability::AdapterTrain).and_then(|p| {
            let key = CallKey::new(stage.as_str(), "adapter-trainer", 1, 0).with_item(&c.id);
            let seed = loop_seed(ctx.run_seed, "adapter", &c.id);
            train_adapter_hook(&ctx.hub, p.as_ref(), key, seed, &frames, &captions)
        });
        match trained {
            Ok(mut a) => {
                a.asset.uri = format!("{dir}/adapter.adapter.json");
                out.files.push((a.asset.uri.clone(), a.bytes));
                adapter = Some(a.asset);
            }
            Err(source) if settings.strict() => {
                return Err(StageError::Provider { stage, source: Box::new(source) })
            }
            Err(e) => out.warnings.push(format!("{}: adapter training skipped: {e}", c.id)),
        }
    }

    out.assets.insert(
        c.id.clone(),
        CharacterAssets {
            character_id: c.id.clone(),
            portrait_prompt: prompt_text,
            portrait: portrait.asset,
            turnaround: turnaround.asset,
            frames,
            captions,
            adapter,
        },
    );
    Ok(())
}

/// Portrait (pooled T2I), turnaround clip (pooled I2V), sampled and
/// captioned reference frames and, when enabled, an adapter per character.
/// A script without characters produces an empty output.
pub fn run_character_stage(ctx: &StageContext, script: &Script) -> Result<CharacterOutput, StageError> {
    let mut out = CharacterOutput::default();
    if script.characters.is_empty() {
        out.warnings.push("script has no characters; character stage skipped".into());
        return Ok(out);
    }
    for c in &script.characters {
        one_character(ctx, c, &mut out)?;
    }
    Ok(out)
}
