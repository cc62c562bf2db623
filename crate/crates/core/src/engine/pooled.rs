use std::thread;

use super::{
    aggregate_weighted, CandidateSlot, EngineError, Evaluate, ExhaustionPolicy, Generate, IterationRecord,
    LoopConfig, LoopTrace, Outcome, Refine, Turn,
};
use crate::providers::ProviderError;
use crate::schema::{PromptSpec, Verdict};

/// Best-of-pool loop: each iteration sends the request to every pool member,
/// scores the survivors, selects the highest aggregate (lowest pool position
/// on ties) and refines the request from the selected candidate's feedback.
///
/// A failing member is recorded as skipped; the iteration fails only if no
/// member succeeds. The loop ends early when the selected candidate scores at
/// least `approve_threshold` on every axis. The final artifact is the last
/// selected candidate.
pub fn run_pooled_loop<A: Clone + Send>(
    pool: &[&dyn Generate<A>],
    evaluator: &dyn Evaluate<A>,
    refiner: &dyn Refine<A>,
    p1: PromptSpec,
    cfg: &LoopConfig,
) -> Result<LoopTrace<A>, EngineError> {
    cfg.check()?;
    if pool.is_empty() {
        return Err(EngineError::Config(format!("loop `{}` has an empty pool", cfg.loop_id)));
    }
    let axes: Vec<&str> = cfg.guideline_set.axes.iter().map(String::as_str).collect();
    if axes.is_empty() {
        return Err(EngineError::Config(format!(
            "loop `{}`: guideline set `{}` declares no evaluation axes",
            cfg.loop_id, cfg.guideline_set.id
        )));
    }

    let mut records: Vec<IterationRecord<A>> = Vec::new();
    let mut prompt = p1;
    let mut refiner_calls = 0;
    let mut consensus = false;

    for iteration in 1..=cfg.max_iterations {
        let results = fan_out(pool, &prompt, cfg, iteration);
        let candidates: Vec<CandidateSlot<A>> = results
            .into_iter()
            .zip(pool)
            .map(|(r, member)| {
                let provider = member.provider_id().map(str::to_string);
                match r {
                    Ok(artifact) => CandidateSlot::Produced { provider, artifact },
                    Err(e) => CandidateSlot::Skipped { provider, error: e.to_string() },
                }
            })
            .collect();
        let survivors: Vec<(usize, &A)> =
            candidates.iter().enumerate().filter_map(|(i, c)| c.artifact().map(|a| (i, a))).collect();
        if survivors.is_empty() {
            return Err(EngineError::AllCandidatesFailed {
                loop_id: cfg.loop_id.clone(),
                iteration,
                errors: candidates
                    .iter()
                    .filter_map(|c| match c {
                        CandidateSlot::Skipped { error, .. } => Some(error.clone()),
                        _ => None,
                    })
                    .collect(),
            });
        }

        let turn = Turn::new(cfg.seed, iteration, 0);
        let mut feedback = evaluator.evaluate(&survivors, &cfg.guideline_set, &turn).map_err(|source| {
            EngineError::Provider {
                loop_id: cfg.loop_id.clone(),
                iteration,
                role: "evaluator".into(),
                source,
            }
        })?;
        if feedback.len() != survivors.len() {
            return Err(EngineError::Provider {
                loop_id: cfg.loop_id.clone(),
                iteration,
                role: "evaluator".into(),
                source: ProviderError::malformed(
                    "evaluator",
                    format!("{} feedback entries for {} candidates", feedback.len(), survivors.len()),
                ),
            });
        }

        let mut selected: Option<(usize, usize, f64)> = None;
        for (slot, (fb, (pool_idx, _))) in feedback.iter_mut().zip(&survivors).enumerate() {
            let score = aggregate_weighted(std::slice::from_ref(fb), &axes, &cfg.axis_weights)
                .map_err(|source| EngineError::Score { loop_id: cfg.loop_id.clone(), source })?;
            let passes = fb.findings.is_empty()
                && axes.iter().all(|a| fb.scores.get(*a).is_some_and(|s| *s >= cfg.approve_threshold));
            fb.verdict = if passes { Verdict::Approve } else { Verdict::Revise };
            if selected.is_none_or(|(_, _, best)| score > best) {
                selected = Some((slot, *pool_idx, score));
            }
        }
        let (slot, pool_idx, score) = selected.expect("survivors is non-empty");
        let approved = feedback[slot].is_approved();
        let scored_candidates = survivors.iter().map(|(i, _)| *i).collect();

        let next_prompt = if !approved && iteration < cfg.max_iterations {
            refiner_calls += 1;
            let artifact = survivors[slot].1;
            Some(
                refiner
                    .refine(
                        &prompt,
                        artifact,
                        std::slice::from_ref(&feedback[slot]),
                        &cfg.guideline_set,
                        &turn,
                    )
                    .map_err(|source| EngineError::Provider {
                        loop_id: cfg.loop_id.clone(),
                        iteration,
                        role: "refiner".into(),
                        source,
                    })?,
            )
        } else {
            None
        };
        drop(survivors);

        records.push(IterationRecord {
            iteration,
            prompt: prompt.clone(),
            candidates,
            feedback,
            scored_candidates,
            selected_index: pool_idx,
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
    let last = records.last().expect("at least one iteration ran");
    for r in &records {
        let skipped = r.skipped_count();
        if skipped > 0 {
            warnings
                .push(format!("iteration {}: {skipped} pool member(s) failed and were skipped", r.iteration));
        }
    }
    let outcome = if consensus {
        Outcome::Consensus
    } else {
        if cfg.on_budget_exhausted == ExhaustionPolicy::Fail {
            return Err(EngineError::BudgetExhausted {
                loop_id: cfg.loop_id.clone(),
                iterations: records.len() as u32,
                residual: Vec::new(),
            });
        }
        warnings.push(format!(
            "budget of {} iteration(s) exhausted below the approval threshold {}; emitting the last selection (score {:.3})",
            cfg.max_iterations, cfg.approve_threshold, last.aggregate_score
        ));
        Outcome::BudgetExhausted
    };
    let final_artifact = last.selected().cloned().expect("selected slot holds an artifact");
    Ok(LoopTrace {
        loop_id: cfg.loop_id.clone(),
        max_iterations: cfg.max_iterations,
        final_iteration: last.iteration,
        records,
        outcome,
        final_artifact,
        refiner_calls,
        warnings,
    })
}

fn fan_out<A: Send>(
    pool: &[&dyn Generate<A>],
    prompt: &PromptSpec,
    cfg: &LoopConfig,
    iteration: u32,
) -> Vec<Result<A, ProviderError>> {
    let turn = |k: usize| Turn::new(cfg.seed, iteration, k as u32);
    if cfg.parallel_fan_out && pool.len() > 1 {
        thread::scope(|scope| {
            let handles: Vec<_> = pool
                .iter()
                .enumerate()
                .map(|(k, member)| {
                    let t = turn(k);
                    scope.spawn(move || member.generate(prompt, &t))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("pool member panicked")).collect()
        })
    } else {
        pool.iter().enumerate().map(|(k, member)| member.generate(prompt, &turn(k))).collect()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::engine::{FnEvaluator, FnGenerator, FnRefiner};
    use crate::guidelines::axes;
    use crate::schema::Feedback;
    use crate::schema::GuidelineSet;

    type Gen = FnGenerator<Box<dyn Fn(&PromptSpec, &Turn) -> Result<f64, ProviderError> + Send + Sync>>;

    /// Pool member whose "artifact" is the naturalness score it will get.
    fn member(score: f64) -> Gen {
        FnGenerator(Box::new(move |_: &PromptSpec, _: &Turn| Ok(score)))
    }

    fn failing() -> Gen {
        FnGenerator(Box::new(|_: &PromptSpec, _: &Turn| {
            Err(ProviderError::Timeout { provider: "down".into(), attempts: 1, detail: "x".into() })
        }))
    }

    fn uniform(score: f64) -> BTreeMap<String, f64> {
        axes::IMAGE.iter().map(|a| (a.to_string(), score)).collect()
    }

    fn evaluator() -> impl Evaluate<f64> {
        FnEvaluator(|c: &[(usize, &f64)], _: &Turn| {
            Ok(c.iter().map(|(_, s)| Feedback::revise("eval", vec![]).with_scores(uniform(**s))).collect())
        })
    }

    fn counting_refiner(calls: &AtomicU32) -> impl Refine<f64> + '_ {
        FnRefiner(move |p: &PromptSpec, _: &f64, _: &[Feedback], _: &Turn| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(p.clone())
        })
    }

    fn cfg(max: u32) -> LoopConfig {
        LoopConfig::new("pool", max, GuidelineSet::image())
    }

    #[test]
    fn ties_break_to_lowest_pool_position() {
        let (a, b, c) = (member(0.6), member(0.9), member(0.9));
        let calls = AtomicU32::new(0);
        let t = run_pooled_loop(
            &[&a, &b, &c],
            &evaluator(),
            &counting_refiner(&calls),
            PromptSpec::text("p"),
            &cfg(2),
        )
        .unwrap();
        assert_eq!(t.records[0].selected_index, 1);
        assert_eq!(t.outcome, Outcome::Consensus);
        assert_eq!(t.iterations(), 1);
    }

    #[test]
    fn single_iteration_budget_never_refines() {
        let (a, b) = (member(0.3), member(0.5));
        let calls = AtomicU32::new(0);
        let t = run_pooled_loop(
            &[&a, &b],
            &evaluator(),
            &counting_refiner(&calls),
            PromptSpec::text("p"),
            &cfg(1),
        )
        .unwrap();
        assert_eq!(t.iterations(), 1);
        assert_eq!(calls.load(Ordering::SeqCst), 0);
        assert_eq!(t.outcome, Outcome::BudgetExhausted);
        assert_eq!(t.final_artifact, 0.5);
    }

    #[test]
    fn failing_members_are_skipped() {
        let (a, b, c) = (failing(), member(0.4), failing());
        let calls = AtomicU32::new(0);
        let t = run_pooled_loop(
            &[&a, &b, &c],
            &evaluator(),
            &counting_refiner(&calls),
            PromptSpec::text("p"),
            &cfg(2),
        )
        .unwrap();
        assert_eq!(t.records[0].skipped_count(), 2);
        assert_eq!(t.records[0].selected_index, 1);
        assert_eq!(t.records[0].scored_candidates, vec![1]);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn all_members_failing_is_fatal() {
        let (a, b) = (failing(), failing());
        let calls = AtomicU32::new(0);
        assert!(matches!(
            run_pooled_loop(
                &[&a, &b],
                &evaluator(),
                &counting_refiner(&calls),
                PromptSpec::text("p"),
                &cfg(2)
            ),
            Err(EngineError::AllCandidatesFailed { iteration: 1, .. })
        ));
    }

    #[test]
    fn parallel_fan_out_matches_sequential() {
        let (a, b, c) = (member(0.2), member(0.7), member(0.4));
        let calls = AtomicU32::new(0);
        let seq = run_pooled_loop(
            &[&a, &b, &c],
            &evaluator(),
            &counting_refiner(&calls),
            PromptSpec::text("p"),
            &cfg(2),
        )
        .unwrap();
        let mut par_cfg = cfg(2);
        par_cfg.parallel_fan_out = true;
        let par = run_pooled_loop(
            &[&a, &b, &c],
            &evaluator(),
            &counting_refiner(&calls),
            PromptSpec::text("p"),
            &par_cfg,
        )
        .unwrap();
        assert_eq!(seq, par);
    }
}
