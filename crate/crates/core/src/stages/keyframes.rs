use super::characters::{pooled, CharacterOutput};
use super::prompts::{
    build_animation_prompt, build_animation_prompt_lenient, build_keyframe_prompt,
    build_keyframe_prompt_lenient,
};
use super::{for_each_bounded, LoopRecord, StageContext, StageError, StageId};
use crate::providers::{Capability, GeneratedAsset};
use crate::schema::{AssetRef, PromptSpec, Script, ShotDesign};

/// Per-shot media of the keyframe or animation stage, in shot order.
#[derive(Debug, Clone, Default)]
pub struct MediaOutput {
    pub assets: Vec<AssetRef>,
    pub files: Vec<(String, Vec<u8>)>,
    pub records: Vec<LoopRecord>,
    pub warnings: Vec<String>,
}

struct ShotResult {
    asset: GeneratedAsset,
    record: LoopRecord,
    warnings: Vec<String>,
}

fn collect(
    stage: StageId,
    results: Vec<(u32, Result<ShotResult, StageError>)>,
    dir: &str,
) -> Result<MediaOutput, StageError> {
    let mut out = MediaOutput::default();
    for (shot, r) in results {
        let mut r = r.map_err(|e| StageError::Shot { stage, shot, source: Box::new(e) })?;
        r.asset.asset.uri = format!("{dir}/shot-{shot:03}.{}", r.asset.asset.kind.extension());
        out.files.push((r.asset.asset.uri.clone(), r.asset.bytes));
        out.assets.push(r.asset.asset);
        out.records.push(r.record);
        out.warnings.extend(r.warnings.into_iter().map(|w| format!("shot {shot}: {w}")));
    }
    Ok(out)
}

fn run_shot(
    ctx: &StageContext,
    stage: StageId,
    capability: Capability,
    shot: u32,
    p1: PromptSpec,
) -> Result<ShotResult, StageError> {
    let item = shot.to_string();
    let trace = pooled(ctx, stage, capability, &item, p1)?;
    Ok(ShotResult {
        record: LoopRecord::new(stage, Some(&item), &trace),
        warnings: trace.warnings.clone(),
        asset: trace.final_artifact,
    })
}

fn check_designs(script: &Script, designs: &[ShotDesign]) -> Result<(), StageError> {
    if designs.len() != script.shot_count() {
        return Err(StageError::Precondition(format!(
            "{} designs for {} shots",
            designs.len(),
            script.shot_count()
        )));
    }
    Ok(())
}

/// One pooled T2I loop per shot, from the keyframe prompt template.
pub fn run_keyframe_stage(
    ctx: &StageContext,
    script: &Script,
    designs: &[ShotDesign],
    characters: &CharacterOutput,
) -> Result<MediaOutput, StageError> {
    let stage = StageId::Keyframes;
    check_designs(script, designs)?;
    let cast = characters.cast(script);
    let jobs: Vec<_> = script.shots.iter().zip(designs).collect();
    let results = for_each_bounded(&jobs, ctx.settings.concurrency, |(shot, design)| {
        let r = if ctx.settings.strict() {
            build_keyframe_prompt(shot, design, &cast).map_err(StageError::from)
        } else {
            Ok(build_keyframe_prompt_lenient(shot, design, &cast))
        }
        .and_then(|p| run_shot(ctx, stage, Capability::T2i, shot.index, p));
        (shot.index, r)
    });
    collect(stage, results, "keyframes")
}

/// One pooled I2V loop per shot, animating that shot's keyframe.
pub fn run_animation_stage(
    ctx: &StageContext,
    script: &Script,
    designs: &[ShotDesign],
    characters: &CharacterOutput,
    keyframes: &[AssetRef],
    clip_seconds: f64,
) -> Result<MediaOutput, StageError> {
    let stage = StageId::Animation;
    check_designs(script, designs)?;
    let cast = characters.cast(script);
    let jobs: Vec<_> =
        script.shots.iter().zip(designs).enumerate().map(|(j, (s, d))| (s, d, keyframes.get(j))).collect();
    let results = for_each_bounded(&jobs, ctx.settings.concurrency, |(shot, design, keyframe)| {
        let r = if ctx.settings.strict() {
            build_animation_prompt(shot, design, &cast, *keyframe)
        } else {
            build_animation_prompt_lenient(shot, design, &cast, *keyframe)
        }
        .map_err(StageError::from)
        .and_then(|p| {
            let p = p.with_meta("clip_seconds", clip_seconds.to_string());
            run_shot(ctx, stage, Capability::I2v, shot.index, p)
        });
        (shot.index, r)
    });
    collect(stage, results, "clips")
}
