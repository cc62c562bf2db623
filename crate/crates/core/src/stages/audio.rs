use std::collections::BTreeSet;

use super::agents::{key, FindingsRefiner, TextGenerator, VoiceReviewer, GENERATOR};
use super::{for_each_bounded, Agent, LoopRecord, StageContext, StageError, StageId};
use crate::digest::canonical_json;
use crate::engine::{run_loop, Examine, ExhaustionPolicy, Generate, LoopConfig, LoopTrace, Refine, Turn};
use crate::guidelines::{estimate_speech_seconds, truncate_words, word_capacity};
use crate::providers::mock::media::{tone_wav, wav_duration};
use crate::providers::mock::task;
use crate::providers::{Capability, GeneratedAsset, ProviderError, ProviderRequest};
use crate::schema::{
    serialize_script, validate_story_output, AssetKind, AssetRef, Feedback, GuidelineSet, PromptKind,
    PromptSpec, Script, Shot, StoryOutput, StoryPair, VoiceLine, VoicePlan,
};
use crate::seed::loop_seed;

/// Result of fitting one shot's voice-over into its clip.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub shot: u32,
    pub original_subtitle: String,
    pub subtitle: String,
    /// Synthesis calls made; 0 for a silent shot.
    pub attempts: u32,
    pub audio_seconds: f64,
    pub clip_seconds: f64,
    pub fits: bool,
    pub audio: GeneratedAsset,
    pub record: Option<LoopRecord>,
}

#[derive(Debug, Clone)]
pub struct AudioOutput {
    pub plan: VoicePlan,
    pub fits: Vec<FitOutcome>,
    pub audios: Vec<AssetRef>,
    pub story: StoryOutput,
    pub files: Vec<(String, Vec<u8>)>,
    pub records: Vec<LoopRecord>,
    pub warnings: Vec<String>,
}

fn parse_plan(text: &str) -> Result<VoicePlan, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn plan_json(p: &VoicePlan) -> String {
    String::from_utf8(canonical_json(p)).expect("utf-8 json")
}

fn audio_seconds(a: &GeneratedAsset) -> f64 {
    a.asset.duration_seconds.or_else(|| wav_duration(&a.bytes).ok()).unwrap_or(f64::INFINITY)
}

struct Synth<'c> {
    ctx: &'c StageContext,
    item: String,
}

impl Generate<GeneratedAsset> for Synth<'_> {
    fn generate(&self, prompt: &PromptSpec, turn: &Turn) -> Result<GeneratedAsset, ProviderError> {
        if prompt.body.trim().is_empty() {
            return Ok(GeneratedAsset::from_bytes(AssetKind::Audio, tone_wav(0.0), None, Some(0.0)));
        }
        let provider = self.ctx.hub.primary(Capability::T2a)?;
        let id = provider.descriptor().id.clone();
        let request = ProviderRequest {
            key: key(StageId::Audio, Some(&self.item), GENERATOR, turn),
            prompt: prompt.clone(),
            seed: turn.seed,
        };
        let mut a = self.ctx.hub.invoke(provider.as_ref(), &request)?.expect_asset(&id, AssetKind::Audio)?;
        a.provider = id;
        Ok(a)
    }
}

struct DurationCheck {
    limit: f64,
}

impl Examine<GeneratedAsset> for DurationCheck {
    fn reviewer_id(&self) -> &str {
        "duration-check"
    }

    fn examine(&self, a: &GeneratedAsset, _: &GuidelineSet, _: &Turn) -> Result<Feedback, ProviderError> {
        Ok(if audio_seconds(a) <= self.limit {
            Feedback::approve("duration-check")
        } else {
            Feedback::revise("duration-check", Vec::new())
        })
    }
}

/// Shortens the subtitle to the largest word count that both fits the
/// limit at the nominal rate and the limit at the rate actually measured,
/// always dropping at least one word. Remote runs ask the text provider to
/// rewrite; its reply is held to the same word budget.
struct SubtitleRefiner<'c> {
    ctx: &'c StageContext,
    item: String,
    limit: f64,
}

impl SubtitleRefiner<'_> {
    fn budget(&self, subtitle: &str, measured: f64) -> usize {
        let words = subtitle.split_whitespace().count();
        let nominal = word_capacity(self.limit, self.ctx.settings.words_per_minute);
        let observed = if measured.is_finite() && measured > 0.0 {
            (words as f64 * self.limit / measured).floor() as usize
        } else {
            0
        };
        nominal.min(observed).min(words.saturating_sub(1))
    }
}

impl Refine<GeneratedAsset> for SubtitleRefiner<'_> {
    fn refine(
        &self,
        prompt: &PromptSpec,
        artifact: &GeneratedAsset,
        _: &[Feedback],
        _: &GuidelineSet,
        turn: &Turn,
    ) -> Result<PromptSpec, ProviderError> {
        let max_words = self.budget(&prompt.body, audio_seconds(artifact));
        let shortened = match (&self.ctx.scenario, max_words) {
            (None, 1..) => {
                let provider = self.ctx.hub.primary(Capability::Text)?;
                let id = provider.descriptor().id.clone();
                let request = ProviderRequest {
                    key: key(StageId::Audio, Some(&self.item), "subtitle-refiner", turn),
                    prompt: PromptSpec::text(prompt.body.clone())
                        .with_meta("task", task::SHORTEN_SUBTITLE)
                        .with_meta("target_seconds", self.limit.to_string())
                        .with_meta("max_words", max_words.to_string())
                        .with_meta("words_per_minute", self.ctx.settings.words_per_minute.to_string()),
                    seed: turn.seed,
                };
                let reply = self.ctx.hub.invoke(provider.as_ref(), &request)?.expect_text(&id)?;
                truncate_words(&reply, max_words)
            }
            _ => truncate_words(&prompt.body, max_words),
        };
        let mut next = prompt.clone();
        next.body = shortened;
        Ok(next)
    }
}

fn synth_prompt(ctx: &StageContext, subtitle: &str, line: Option<&VoiceLine>) -> PromptSpec {
    PromptSpec::new(PromptKind::T2a, subtitle)
        .with_meta("voice_id", line.map_or("narrator", |l| l.voice_id.as_str()))
        .with_meta("emotion", line.map_or("neutral", |l| l.emotion.as_str()))
        .with_meta("words_per_minute", ctx.settings.words_per_minute.to_string())
}

/// Synthesizes a shot's voice-over and shortens its subtitle until the
/// audio fits `clip_seconds` plus slack, within the subtitle budget.
/// Strict runs turn a persistent overrun into [`StageError::FitFailure`].
pub fn fit_subtitle(
    ctx: &StageContext,
    shot: &Shot,
    line: Option<&VoiceLine>,
    clip_seconds: f64,
) -> Result<FitOutcome, StageError> {
    let stage = StageId::Audio;
    let settings = &ctx.settings;
    let limit = clip_seconds + settings.slack_seconds;
    let original = shot.subtitle.trim().to_string();
    let item = shot.index.to_string();
    if original.is_empty() || shot.silent {
        return Ok(FitOutcome {
            shot: shot.index,
            original_subtitle: original,
            subtitle: String::new(),
            attempts: 0,
            audio_seconds: 0.0,
            clip_seconds,
            fits: true,
            audio: GeneratedAsset::from_bytes(AssetKind::Audio, tone_wav(0.0), None, Some(0.0)),
            record: None,
        });
    }

    let budget = if settings.enabled(Agent::SubtitleRefiner) { settings.budgets.subtitle } else { 1 };
    let cfg = LoopConfig::new(format!("audio.{item}"), budget, GuidelineSet::from_axes("subtitle-fit", &[]))
        .with_seed(loop_seed(ctx.run_seed, stage.as_str(), &item))
        .with_policy(ExhaustionPolicy::EmitBestSoFar);
    let synth = Synth { ctx, item: item.clone() };
    let check = DurationCheck { limit };
    let refiner = SubtitleRefiner { ctx, item: item.clone(), limit };
    let examiners: [&dyn Examine<GeneratedAsset>; 1] = [&check];
    let trace: LoopTrace<GeneratedAsset> =
        run_loop(&synth, &examiners, &refiner, synth_prompt(ctx, &original, line), &cfg)
            .map_err(|source| StageError::Loop { stage, source: Box::new(source) })?;

    let chosen = &trace.records[trace.final_iteration as usize - 1];
    let subtitle = chosen.prompt.body.clone();
    let audio = trace.final_artifact.clone();
    let seconds = audio_seconds(&audio);
    let fits = seconds <= limit;
    if !fits && settings.strict() {
        return Err(StageError::FitFailure {
            shot: shot.index,
            audio_seconds: seconds,
            clip_seconds,
            slack_seconds: settings.slack_seconds,
            attempts: trace.iterations(),
        });
    }
    Ok(FitOutcome {
        shot: shot.index,
        original_subtitle: original,
        subtitle,
        attempts: trace.iterations(),
        audio_seconds: seconds,
        clip_seconds,
        fits,
        audio,
        record: Some(LoopRecord::new(stage, Some(&item), &trace)),
    })
}

fn voice_plan(
    ctx: &StageContext,
    script: &Script,
) -> Result<(VoicePlan, LoopRecord, Vec<String>), StageError> {
    let stage = StageId::Audio;
    let settings = &ctx.settings;
    let seed = loop_seed(ctx.run_seed, stage.as_str(), "voice");
    let p1 = PromptSpec::text(format!(
        "Choose one background music track for the whole story from [{}] and, for each of the {} shots, \
         a voice and an emotion from [{}].",
        settings.music_catalog.join(", "),
        script.shot_count(),
        settings.emotions.join(", ")
    ))
    .with_meta("task", task::VOICE_PLAN)
    .with_meta("script", String::from_utf8(serialize_script(script)).expect("utf-8 json"))
    .with_meta("music_catalog", settings.music_catalog.join(","))
    .with_meta("emotions", settings.emotions.join(","))
    .with_meta("draft_seed", seed.to_string());

    let generator = TextGenerator::new(ctx, stage, parse_plan).for_item("voice");
    let trace: LoopTrace<VoicePlan> = if settings.enabled(Agent::VoiceReviewer) {
        let reviewer = VoiceReviewer {
            ctx,
            music: settings.music_catalog.iter().cloned().collect::<BTreeSet<_>>(),
            emotions: settings.emotions.iter().cloned().collect(),
        };
        let cfg = LoopConfig::new("audio.voice", settings.budgets.voice, GuidelineSet::voice())
            .with_seed(seed)
            .with_policy(settings.policy);
        let examiners: [&dyn Examine<VoicePlan>; 1] = [&reviewer];
        run_loop(&generator, &examiners, &FindingsRefiner { serialize: plan_json }, p1, &cfg)
            .map_err(|source| StageError::Loop { stage, source: Box::new(source) })?
    } else {
        let plan = generator
            .generate(&p1, &Turn::new(seed, 1, 0))
            .map_err(|source| StageError::Provider { stage, source: Box::new(source) })?;
        LoopTrace::unreviewed("audio.voice", p1, plan)
    };
    let plan = trace.final_artifact.clone();
    plan.validate(script.shot_count())
        .map_err(|e| StageError::Schema { stage, detail: format!("voice plan: {e}") })?;
    let mut warnings: Vec<String> = trace.warnings.iter().map(|w| format!("voice plan: {w}")).collect();
    for f in trace.residual_findings() {
        warnings.push(format!("voice plan: residual finding: {f}"));
    }
    Ok((plan, LoopRecord::new(stage, Some("voice"), &trace), warnings))
}

/// Voice plan (Voice Actor plus Voice Reviewer), per-shot subtitle fitting
/// against the rendered clips, then assembly of the story output.
pub fn run_audio_stage(
    ctx: &StageContext,
    script: &Script,
    clips: &[AssetRef],
) -> Result<AudioOutput, StageError> {
    let stage = StageId::Audio;
    if clips.len() != script.shot_count() {
        return Err(StageError::Precondition(format!(
            "{} clips for {} shots",
            clips.len(),
            script.shot_count()
        )));
    }
    let (plan, plan_record, mut warnings) = voice_plan(ctx, script)?;
    let mut records = vec![plan_record];

    let jobs: Vec<(&Shot, &AssetRef)> = script.shots.iter().zip(clips).collect();
    let results = for_each_bounded(&jobs, ctx.settings.concurrency, |(shot, clip)| {
        let clip_seconds = clip.duration_seconds.ok_or_else(|| StageError::Schema {
            stage,
            detail: format!("clip of shot {} has no duration", shot.index),
        })?;
        fit_subtitle(ctx, shot, plan.line(shot.index), clip_seconds)
    });

    let mut fits = Vec::new();
    let mut files = Vec::new();
    let mut audios = Vec::new();
    let mut pairs = Vec::new();
    for ((shot, clip), r) in jobs.iter().zip(results) {
        let mut fit = r?;
        fit.audio.asset.uri = format!("audio/shot-{:03}.wav", shot.index);
        if fit.audio.asset.duration_seconds.is_none() {
            fit.audio.asset.duration_seconds = Some(fit.audio_seconds);
        }
        files.push((fit.audio.asset.uri.clone(), fit.audio.bytes.clone()));
        if !fit.fits {
            warnings.push(format!(
                "shot {}: audio {:.2}s still exceeds clip {:.2}s + {:.2}s slack after {} attempt(s)",
                shot.index, fit.audio_seconds, fit.clip_seconds, ctx.settings.slack_seconds, fit.attempts
            ));
        } else if fit.subtitle != fit.original_subtitle {
            warnings.push(format!(
                "shot {}: subtitle shortened from {} to {} words ({:.2}s of speech)",
                shot.index,
                fit.original_subtitle.split_whitespace().count(),
                fit.subtitle.split_whitespace().count(),
                estimate_speech_seconds(&fit.subtitle, ctx.settings.words_per_minute)
            ));
        }
        if let Some(r) = &fit.record {
            records.push(r.clone());
        }
        audios.push(fit.audio.asset.clone());
        pairs.push(StoryPair { clip: (*clip).clone(), audio: fit.audio.asset.clone() });
        fits.push(fit);
    }

    let story = StoryOutput::assemble(plan.background_music_id.clone(), pairs);
    let violations = validate_story_output(&story, script, ctx.settings.slack_seconds);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        if ctx.settings.strict() {
            return Err(StageError::Output(text.join("; ")));
        }
        warnings.extend(text.into_iter().map(|t| format!("story output: {t}")));
    }
    Ok(AudioOutput { plan, fits, audios, story, files, records, warnings })
}
