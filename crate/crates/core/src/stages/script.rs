use super::agents::{FindingsRefiner, ScriptReviewer, TextGenerator};
use super::{Agent, LoopRecord, StageContext, StageError, StageId};
use crate::engine::{run_loop, Examine, Generate, LoopConfig, LoopTrace, Outcome, Turn};
use crate::providers::mock::task;
use crate::schema::{parse_document, serialize_script, GuidelineSet, PromptSpec, Script, UserPrompt};
use crate::seed::loop_seed;

#[derive(Debug, Clone)]
pub struct ScriptOutput {
    pub script: Script,
    /// Candidate script of every iteration, in order.
    pub drafts: Vec<Script>,
    pub record: LoopRecord,
    pub warnings: Vec<String>,
}

fn parse_draft(text: &str) -> Result<Script, String> {
    parse_document(text.as_bytes()).map_err(|e| e.to_string())
}

fn script_json(s: &Script) -> String {
    String::from_utf8(serialize_script(s)).expect("utf-8 json")
}

pub(crate) fn script_request(prompt: &UserPrompt, words_per_minute: f64, seed: u64) -> PromptSpec {
    let body = format!(
        "Write a screenplay of exactly {n} shots for this request: \"{text}\". \
         Each shot has one location, at most one simple action, and a subtitle that can be spoken \
         within {clip} seconds. Follow the structure, content and style guides.",
        n = prompt.target_shot_count,
        text = prompt.text.trim(),
        clip = prompt.target_clip_seconds,
    );
    PromptSpec::text(body)
        .with_meta("task", task::SCRIPT)
        .with_meta("user_prompt", prompt.text.trim())
        .with_meta("target_shot_count", prompt.target_shot_count.to_string())
        .with_meta("target_clip_seconds", prompt.target_clip_seconds.to_string())
        .with_meta("words_per_minute", words_per_minute.to_string())
        .with_meta("draft_seed", seed.to_string())
}

/// Scriptwriter plus Structure, Content and Style reviewers, run to
/// consensus or budget. The final script must parse strictly and have
/// exactly the requested number of shots.
pub fn run_script_stage(ctx: &StageContext, prompt: &UserPrompt) -> Result<ScriptOutput, StageError> {
    let stage = StageId::Script;
    prompt.validate().map_err(|e| StageError::Schema { stage, detail: e.to_string() })?;
    let settings = &ctx.settings;
    let n = prompt.target_shot_count as usize;
    let seed = loop_seed(ctx.run_seed, stage.as_str(), "");
    let p1 = script_request(prompt, settings.words_per_minute, seed);

    let generator = TextGenerator::new(ctx, stage, parse_draft);
    let panel = [
        (Agent::StructureReviewer, "structure-reviewer", GuidelineSet::structure()),
        (Agent::ContentReviewer, "content-reviewer", GuidelineSet::content()),
        (Agent::StyleReviewer, "style-reviewer", GuidelineSet::style()),
    ];
    let reviewers: Vec<ScriptReviewer> = panel
        .into_iter()
        .filter(|(agent, _, _)| settings.enabled(*agent))
        .map(|(_, id, guidelines)| ScriptReviewer { ctx, id, guidelines, expected_shots: n })
        .collect();
    let examiners: Vec<&dyn Examine<Script>> = reviewers.iter().map(|r| r as &dyn Examine<Script>).collect();

    let trace: LoopTrace<Script> = if examiners.is_empty() {
        let draft = generator
            .generate(&p1, &Turn::new(seed, 1, 0))
            .map_err(|source| StageError::Provider { stage, source: Box::new(source) })?;
        LoopTrace::unreviewed("script", p1, draft)
    } else {
        let cfg = LoopConfig::new("script", settings.budgets.script, GuidelineSet::script())
            .with_seed(seed)
            .with_policy(settings.policy);
        let refiner = FindingsRefiner { serialize: script_json };
        run_loop(&generator, &examiners, &refiner, p1, &cfg)
            .map_err(|source| StageError::Loop { stage, source: Box::new(source) })?
    };

    let mut warnings = trace.warnings.clone();
    if trace.outcome == Outcome::BudgetExhausted {
        for f in trace.residual_findings() {
            warnings.push(format!("residual finding: {f}"));
        }
    }
    let script = trace.final_artifact.clone();
    script
        .validate()
        .map_err(|e| StageError::Schema { stage, detail: format!("final script is invalid: {e}") })?;
    if script.shot_count() != n {
        return Err(StageError::Schema {
            stage,
            detail: format!("final script has {} shots, expected {n}", script.shot_count()),
        });
    }
    let drafts = trace
        .records
        .iter()
        .filter_map(|r| r.candidates.first().and_then(|c| c.artifact()).cloned())
        .collect();
    Ok(ScriptOutput { script, drafts, record: LoopRecord::new(stage, None, &trace), warnings })
}
