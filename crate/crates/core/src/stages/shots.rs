use super::agents::{DesignReviewer, FindingsRefiner, TextGenerator};
use super::{Agent, LoopRecord, StageContext, StageError, StageId};
use crate::digest::canonical_json;
use crate::engine::{run_loop, Examine, Generate, LoopConfig, LoopTrace, Turn};
use crate::providers::mock::task;
use crate::schema::{serialize_script, GuidelineSet, PromptSpec, Script, ShotDesign};
use crate::seed::loop_seed;

#[derive(Debug, Clone)]
pub struct ShotOutput {
    pub designs: Vec<ShotDesign>,
    pub record: LoopRecord,
    pub warnings: Vec<String>,
}

fn parse_designs(text: &str) -> Result<Vec<ShotDesign>, String> {
    let designs: Vec<ShotDesign> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    for (i, d) in designs.iter().enumerate() {
        if d.shot_index as usize != i + 1 {
            return Err(format!("design {} is for shot {}", i + 1, d.shot_index));
        }
    }
    Ok(designs)
}

fn designs_json(d: &Vec<ShotDesign>) -> String {
    String::from_utf8(canonical_json(d)).expect("utf-8 json")
}

/// Shot Designer plus Shot Reviewer: one design with all seven elements per shot.
pub fn run_shot_stage(ctx: &StageContext, script: &Script) -> Result<ShotOutput, StageError> {
    let stage = StageId::Shots;
    let n = script.shot_count();
    if n == 0 {
        return Err(StageError::Precondition("shot stage needs at least one shot".into()));
    }
    let settings = &ctx.settings;
    let seed = loop_seed(ctx.run_seed, stage.as_str(), "");
    let p1 = PromptSpec::text(format!(
        "For each of the {n} shots of the script, write a shot design with background, character pose, \
         character action, prop description, camera position, camera movement and lighting design."
    ))
    .with_meta("task", task::DESIGNS)
    .with_meta("script", String::from_utf8(serialize_script(script)).expect("utf-8 json"))
    .with_meta("draft_seed", seed.to_string());

    let generator = TextGenerator::new(ctx, stage, parse_designs);
    let reviewer = DesignReviewer { ctx };
    let trace: LoopTrace<Vec<ShotDesign>> = if settings.enabled(Agent::ShotReviewer) {
        let cfg = LoopConfig::new("shots", settings.budgets.shot, GuidelineSet::shot_design())
            .with_seed(seed)
            .with_policy(settings.policy);
        let examiners: [&dyn Examine<Vec<ShotDesign>>; 1] = [&reviewer];
        run_loop(&generator, &examiners, &FindingsRefiner { serialize: designs_json }, p1, &cfg)
            .map_err(|source| StageError::Loop { stage, source: Box::new(source) })?
    } else {
        let d = generator
            .generate(&p1, &Turn::new(seed, 1, 0))
            .map_err(|source| StageError::Provider { stage, source: Box::new(source) })?;
        LoopTrace::unreviewed("shots", p1, d)
    };

    let designs = trace.final_artifact.clone();
    if designs.len() != n {
        return Err(StageError::Schema { stage, detail: format!("{} designs for {n} shots", designs.len()) });
    }
    let mut warnings = trace.warnings.clone();
    for d in &designs {
        for e in d.missing_elements() {
            warnings.push(format!("shot {}: design element {e} is empty", d.shot_index));
        }
    }
    Ok(ShotOutput { designs, record: LoopRecord::new(stage, None, &trace), warnings })
}
