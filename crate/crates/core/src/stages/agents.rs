//! Generators, reviewers, evaluators and refiners shared by the stages.

use std::collections::{BTreeMap, BTreeSet};
use std::marker::PhantomData;
use std::sync::Arc;

use base64::Engine as _;

use super::{StageContext, StageId};
use crate::engine::{Evaluate, Examine, Generate, Refine, Turn};
use crate::providers::mock::{mock_examiner, rule_findings, Examinable};
use crate::providers::{CallKey, Capability, GeneratedAsset, Provider, ProviderError, ProviderRequest};
use crate::schema::{
    AssetKind, CharacterDef, Feedback, GuidelineSet, PromptSpec, Script, ShotDesign, VoicePlan,
};

pub(crate) const GENERATOR: &str = "generator";
pub(crate) const EVALUATOR: &str = "evaluator";

pub(crate) fn key(stage: StageId, item: Option<&str>, role: &str, turn: &Turn) -> CallKey {
    let k = CallKey::new(stage.as_str(), role, turn.iteration, turn.candidate);
    match item {
        Some(i) => k.with_item(i),
        None => k,
    }
}

fn review(
    ctx: &StageContext,
    key: &CallKey,
    reviewer: &str,
    artifact: &Examinable<'_>,
    guidelines: &GuidelineSet,
    seed: u64,
) -> Result<Feedback, ProviderError> {
    match &ctx.scenario {
        Some(s) => mock_examiner(s, key, reviewer, artifact, guidelines, seed),
        None => Ok(Feedback::from_findings(reviewer, rule_findings(artifact, guidelines))),
    }
}

/// Text-capability generator whose reply is parsed into `A`.
pub(crate) struct TextGenerator<'c, A> {
    pub ctx: &'c StageContext,
    pub stage: StageId,
    pub item: Option<&'static str>,
    pub parse: fn(&str) -> Result<A, String>,
    pub _artifact: PhantomData<fn() -> A>,
}

impl<'c, A> TextGenerator<'c, A> {
    pub fn new(ctx: &'c StageContext, stage: StageId, parse: fn(&str) -> Result<A, String>) -> Self {
        Self { ctx, stage, item: None, parse, _artifact: PhantomData }
    }

    pub fn for_item(mut self, item: &'static str) -> Self {
        self.item = Some(item);
        self
    }
}

impl<A> Generate<A> for TextGenerator<'_, A> {
    fn generate(&self, prompt: &PromptSpec, turn: &Turn) -> Result<A, ProviderError> {
        let provider = self.ctx.hub.primary(Capability::Text)?;
        let request = ProviderRequest {
            key: key(self.stage, self.item, GENERATOR, turn),
            prompt: prompt.clone(),
            seed: turn.seed,
        };
        let id = provider.descriptor().id.clone();
        let text = self.ctx.hub.invoke(provider.as_ref(), &request)?.expect_text(&id)?;
        (self.parse)(&text).map_err(|e| ProviderError::malformed(id, e))
    }
}

pub(crate) struct ScriptReviewer<'c> {
    pub ctx: &'c StageContext,
    pub id: &'static str,
    pub guidelines: GuidelineSet,
    pub expected_shots: usize,
}

impl Examine<Script> for ScriptReviewer<'_> {
    fn reviewer_id(&self) -> &str {
        self.id
    }

    fn examine(&self, script: &Script, _: &GuidelineSet, turn: &Turn) -> Result<Feedback, ProviderError> {
        let artifact = Examinable::Script {
            script,
            expected_shots: self.expected_shots,
            content: Some(&self.ctx.content),
        };
        review(
            self.ctx,
            &key(StageId::Script, None, self.id, turn),
            self.id,
            &artifact,
            &self.guidelines,
            turn.seed,
        )
    }
}

pub(crate) struct DesignReviewer<'c> {
    pub ctx: &'c StageContext,
}

impl Examine<Vec<ShotDesign>> for DesignReviewer<'_> {
    fn reviewer_id(&self) -> &str {
        "shot-reviewer"
    }

    fn examine(
        &self,
        designs: &Vec<ShotDesign>,
        g: &GuidelineSet,
        turn: &Turn,
    ) -> Result<Feedback, ProviderError> {
        review(
            self.ctx,
            &key(StageId::Shots, None, "shot-reviewer", turn),
            "shot-reviewer",
            &Examinable::Designs(designs),
            g,
            turn.seed,
        )
    }
}

pub(crate) struct VoiceReviewer<'c> {
    pub ctx: &'c StageContext,
    pub music: BTreeSet<String>,
    pub emotions: BTreeSet<String>,
}

impl Examine<VoicePlan> for VoiceReviewer<'_> {
    fn reviewer_id(&self) -> &str {
        "voice-reviewer"
    }

    fn examine(&self, plan: &VoicePlan, g: &GuidelineSet, turn: &Turn) -> Result<Feedback, ProviderError> {
        review(
            self.ctx,
            &key(StageId::Audio, Some("voice"), "voice-reviewer", turn),
            "voice-reviewer",
            &Examinable::VoicePlan { plan, music: &self.music, emotions: &self.emotions },
            g,
            turn.seed,
        )
    }
}

/// Unified writer-refiner: the next request restates the original one plus
/// the reviewers' findings, and carries the previous draft in metadata.
pub(crate) struct FindingsRefiner<A> {
    pub serialize: fn(&A) -> String,
}

impl<A> FindingsRefiner<A> {
    pub fn revise(
        prompt: &PromptSpec,
        previous: Option<String>,
        feedback: &[Feedback],
        turn: &Turn,
    ) -> PromptSpec {
        let base = prompt.meta("base_body").unwrap_or(&prompt.body).to_string();
        let lines: Vec<String> =
            feedback.iter().flat_map(|f| f.findings.iter().map(|x| format!("- {x}"))).collect();
        let mut next = prompt.clone();
        next.body = format!(
            "{base}\n\nRevision {}: rewrite the previous draft so that it resolves:\n{}",
            turn.iteration + 1,
            if lines.is_empty() { "- reviewer objections".to_string() } else { lines.join("\n") }
        );
        next.metadata.insert("base_body".into(), base);
        next.metadata.insert("revision".into(), (turn.iteration + 1).to_string());
        if let Some(p) = previous {
            next.metadata.insert("previous_draft".into(), p);
        }
        next
    }
}

impl<A> Refine<A> for FindingsRefiner<A> {
    fn refine(
        &self,
        prompt: &PromptSpec,
        artifact: &A,
        feedback: &[Feedback],
        _: &GuidelineSet,
        turn: &Turn,
    ) -> Result<PromptSpec, ProviderError> {
        Ok(Self::revise(prompt, Some((self.serialize)(artifact)), feedback, turn))
    }
}

/// One member of a media provider pool.
pub(crate) struct PoolMember<'c> {
    pub ctx: &'c StageContext,
    pub provider: Arc<dyn Provider>,
    pub stage: StageId,
    pub item: String,
    pub kind: AssetKind,
}

impl Generate<GeneratedAsset> for PoolMember<'_> {
    fn generate(&self, prompt: &PromptSpec, turn: &Turn) -> Result<GeneratedAsset, ProviderError> {
        let request = ProviderRequest {
            key: key(self.stage, Some(&self.item), GENERATOR, turn),
            prompt: prompt.clone(),
            seed: turn.seed,
        };
        let id = self.provider.descriptor().id.clone();
        let mut asset =
            self.ctx.hub.invoke(self.provider.as_ref(), &request)?.expect_asset(&id, self.kind)?;
        asset.provider = id;
        Ok(asset)
    }

    fn provider_id(&self) -> Option<&str> {
        Some(&self.provider.descriptor().id)
    }
}

pub(crate) fn pool_members<'c>(
    ctx: &'c StageContext,
    capability: Capability,
    stage: StageId,
    item: &str,
    kind: AssetKind,
) -> Result<Vec<PoolMember<'c>>, ProviderError> {
    let pool = ctx.hub.pool(capability);
    if pool.is_empty() {
        return Err(ProviderError::NotConfigured(capability.to_string()));
    }
    Ok(pool
        .into_iter()
        .map(|provider| PoolMember { ctx, provider, stage, item: item.to_string(), kind })
        .collect())
}

/// Scores pooled candidates on the guideline axes. Mock runs use the mock
/// evaluator; otherwise the text provider is asked for a JSON object of
/// axis scores for each candidate.
pub(crate) struct MediaEvaluator<'c> {
    pub ctx: &'c StageContext,
    pub stage: StageId,
    pub item: String,
}

impl MediaEvaluator<'_> {
    fn remote(
        &self,
        key: CallKey,
        asset: &GeneratedAsset,
        g: &GuidelineSet,
        seed: u64,
    ) -> Result<Feedback, ProviderError> {
        let provider = self.ctx.hub.primary(Capability::Text)?;
        let id = provider.descriptor().id.clone();
        let prompt = PromptSpec::text(format!(
            "Score this {} from 0 to 1 on each of: {}. Reply with a JSON object keyed by axis.",
            asset.asset.kind,
            g.axes.join(", ")
        ))
        .with_meta("task", "evaluate")
        .with_meta("axes", g.axes.join(","))
        .with_meta("candidate_base64", base64::engine::general_purpose::STANDARD.encode(&asset.bytes));
        let text = self
            .ctx
            .hub
            .invoke(provider.as_ref(), &ProviderRequest { key, prompt, seed })?
            .expect_text(&id)?;
        let scores: BTreeMap<String, f64> =
            serde_json::from_str(&text).map_err(|e| ProviderError::malformed(&id, e))?;
        for axis in &g.axes {
            match scores.get(axis) {
                Some(v) if (0.0..=1.0).contains(v) => {}
                _ => {
                    return Err(ProviderError::malformed(
                        &id,
                        format!("missing or out-of-range score `{axis}`"),
                    ))
                }
            }
        }
        Ok(Feedback::revise(EVALUATOR, Vec::new()).with_scores(scores))
    }
}

impl Evaluate<GeneratedAsset> for MediaEvaluator<'_> {
    fn evaluate(
        &self,
        candidates: &[(usize, &GeneratedAsset)],
        g: &GuidelineSet,
        turn: &Turn,
    ) -> Result<Vec<Feedback>, ProviderError> {
        candidates
            .iter()
            .map(|(idx, asset)| {
                let t = Turn { candidate: *idx as u32, ..*turn };
                let k = key(self.stage, Some(&self.item), EVALUATOR, &t);
                match &self.ctx.scenario {
                    Some(s) => mock_examiner(s, &k, EVALUATOR, &Examinable::Candidate(asset), g, turn.seed),
                    None => self.remote(k, asset, g, turn.seed),
                }
            })
            .collect()
    }
}

/// Pooled-loop refiner: restates the request and asks for improvement on
/// the axes where the selected candidate fell below the threshold.
pub(crate) struct AxisRefiner {
    pub threshold: f64,
}

impl Refine<GeneratedAsset> for AxisRefiner {
    fn refine(
        &self,
        prompt: &PromptSpec,
        _: &GeneratedAsset,
        feedback: &[Feedback],
        _: &GuidelineSet,
        turn: &Turn,
    ) -> Result<PromptSpec, ProviderError> {
        let base = prompt.meta("base_body").unwrap_or(&prompt.body).to_string();
        let weak: Vec<String> = feedback
            .iter()
            .flat_map(|f| f.scores.iter())
            .filter(|(_, s)| **s < self.threshold)
            .map(|(a, _)| a.replace('_', " "))
            .collect();
        let mut next = prompt.clone();
        next.body = if weak.is_empty() {
            base.clone()
        } else {
            format!("{base}\nRefinement {}: improve {}.", turn.iteration + 1, weak.join(", "))
        };
        next.metadata.insert("base_body".into(), base);
        next.metadata.insert("revision".into(), (turn.iteration + 1).to_string());
        Ok(next)
    }
}

/// View name for a turnaround frame at `angle` degrees from frontal.
pub fn view_label(angle: f64) -> &'static str {
    const VIEWS: [&str; 8] = [
        "front view",
        "front-right three-quarter view",
        "right profile",
        "back-right three-quarter view",
        "back view",
        "back-left three-quarter view",
        "left profile",
        "front-left three-quarter view",
    ];
    let a = angle.rem_euclid(360.0);
    VIEWS[((a + 22.5) / 45.0).floor() as usize % 8]
}

/// Fills `{name}`, `{appearance}` and `{view}` in a caption template.
pub fn caption_for(template: &str, c: &CharacterDef, view: &str) -> String {
    template.replace("{name}", &c.name).replace("{appearance}", &c.appearance).replace("{view}", view)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn views_cover_the_circle() {
        assert_eq!(view_label(0.0), "front view");
        assert_eq!(view_label(90.0), "right profile");
        assert_eq!(view_label(180.0), "back view");
        assert_eq!(view_label(350.0), "front view");
        assert_eq!(view_label(-90.0), "left profile");
    }

    #[test]
    fn caption_template() {
        let c = CharacterDef {
            id: "mara".into(),
            name: "Mara".into(),
            appearance: "grey braid".into(),
            lora_ref: None,
        };
        assert_eq!(
            caption_for(super::super::DEFAULT_CAPTION_TEMPLATE, &c, "back view"),
            "a photo of Mara, grey braid, back view"
        );
    }
}
