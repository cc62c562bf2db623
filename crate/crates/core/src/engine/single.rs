use super::{
    aggregate_weighted, CandidateSlot, EngineError, Examine, ExhaustionPolicy, Generate, IterationRecord,
    LoopConfig, LoopTrace, Outcome, Refine, Turn,
};
use crate::schema::{Feedback, PromptSpec};

/// Generate, examine with every examiner, refine; stop at the first
/// iteration all examiners approve or when the budget is spent.
///
/// On exhaustion with [`ExhaustionPolicy::EmitBestSoFar`] the final artifact
/// is the candidate with the highest aggregate score across all iterations
/// (later iterations win ties).
pub fn run_loop<A: Clone>(
    generator: &dyn Generate<A>,
    examiners: &[&dyn Examine<A>],
    refiner: &dyn Refine<A>,
    p1: PromptSpec,
    cfg: &LoopConfig,
) -> Result<LoopTrace<A>, EngineError> {
    cfg.check()?;
    if examiners.is_empty() {
        return Err(EngineError::Config(format!("loop `{}` has no examiners", cfg.loop_id)));
    }
    let provider_err = |iteration: u32, role: &str, source| EngineError::Provider {
        loop_id: cfg.loop_id.clone(),
        iteration,
        role: role.to_string(),
        source,
    };

    let mut records: Vec<IterationRecord<A>> = Vec::new();
    let mut prompt = p1;
    let mut best: Option<(f64, usize)> = None;
    let mut refiner_calls = 0;
    let mut consensus = false;

    for iteration in 1..=cfg.max_iterations {
        let turn = Turn::new(cfg.seed, iteration, 0);
        let artifact =
            generator.generate(&prompt, &turn).map_err(|e| provider_err(iteration, "generator", e))?;
        let feedback = examiners
            .iter()
            .map(|ex| {
                ex.examine(&artifact, &cfg.guideline_set, &turn)
                    .map_err(|e| provider_err(iteration, ex.reviewer_id(), e))
            })
            .collect::<Result<Vec<Feedback>, _>>()?;
        let score = single_score(cfg, &feedback)?;
        let approved = feedback.iter().all(Feedback::is_approved);

        if best.is_none_or(|(s, _)| score >= s) {
            best = Some((score, records.len()));
        }
        let next_prompt = if !approved && iteration < cfg.max_iterations {
            refiner_calls += 1;
            Some(
                refiner
                    .refine(&prompt, &artifact, &feedback, &cfg.guideline_set, &turn)
                    .map_err(|e| provider_err(iteration, "refiner", e))?,
            )
        } else {
            None
        };
        records.push(IterationRecord {
            iteration,
            prompt: prompt.clone(),
            candidates: vec![CandidateSlot::Produced {
                provider: generator.provider_id().map(str::to_string),
                artifact,
            }],
            feedback,
            scored_candidates: Vec::new(),
            selected_index: 0,
            aggregate_score: score,
        });
        if approved {
            consensus = true;
            break;
        }
        if let Some(p) = next_prompt {
            prompt = p;
        }
    }

    let mut warnings = Vec::new();
    let (outcome, pick) = if consensus {
        (Outcome::Consensus, records.len() - 1)
    } else {
        let residual: Vec<_> = records
            .last()
            .map(|r| r.feedback.iter().flat_map(|f| f.findings.clone()).collect())
            .unwrap_or_default();
        if cfg.on_budget_exhausted == ExhaustionPolicy::Fail {
            return Err(EngineError::BudgetExhausted {
                loop_id: cfg.loop_id.clone(),
                iterations: records.len() as u32,
                residual,
            });
        }
        let (_, idx) = best.expect("at least one iteration ran");
        warnings.push(format!(
            "budget of {} iteration(s) exhausted without consensus; emitting iteration {} ({} residual finding(s) on the last draft)",
            cfg.max_iterations,
            idx + 1,
            residual.len()
        ));
        (Outcome::BudgetExhausted, idx)
    };
    let final_artifact =
        records[pick].selected().cloned().expect("single-candidate records always hold their artifact");
    Ok(LoopTrace {
        loop_id: cfg.loop_id.clone(),
        max_iterations: cfg.max_iterations,
        final_iteration: records[pick].iteration,
        records,
        outcome,
        final_artifact,
        refiner_calls,
        warnings,
    })
}

fn single_score(cfg: &LoopConfig, feedback: &[Feedback]) -> Result<f64, EngineError> {
    if cfg.score_axes.is_empty() {
        let findings: usize = feedback.iter().map(|f| f.findings.len()).sum();
        let revisions = feedback.iter().filter(|f| !f.is_approved()).count();
        return Ok(1.0 / (1.0 + findings.max(revisions) as f64));
    }
    let axes: Vec<&str> = cfg.score_axes.iter().map(String::as_str).collect();
    aggregate_weighted(feedback, &axes, &cfg.axis_weights)
        .map_err(|source| EngineError::Score { loop_id: cfg.loop_id.clone(), source })
}
