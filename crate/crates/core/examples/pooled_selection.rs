//! Best-of-pool selection over three image "providers" with fixed quality.

use std::collections::BTreeMap;

use reelwright::engine::{run_pooled_loop, FnEvaluator, FnGenerator, FnRefiner, Generate, LoopConfig, Turn};
use reelwright::schema::{Feedback, GuidelineSet, PromptSpec};

fn main() {
    let quality = [0.55, 0.82, 0.71];
    let members: Vec<_> = quality
        .iter()
        .map(|&q| {
            FnGenerator(move |_: &PromptSpec, t: &Turn| Ok((q + 0.05 * (t.iteration - 1) as f64).min(1.0)))
        })
        .collect();
    let pool: Vec<&dyn Generate<f64>> = members.iter().map(|m| m as &dyn Generate<f64>).collect();

    let guides = GuidelineSet::image();
    let axes = guides.axes.clone();
    let judge = FnEvaluator(move |cands: &[(usize, &f64)], _: &Turn| {
        Ok(cands
            .iter()
            .map(|(_, q)| {
                let scores: BTreeMap<String, f64> = axes.iter().map(|a| (a.clone(), **q)).collect();
                Feedback::revise("judge", vec![]).with_scores(scores)
            })
            .collect())
    });
    let refiner = FnRefiner(|p: &PromptSpec, _: &f64, _: &[Feedback], _: &Turn| {
        Ok(PromptSpec::text(format!("{}, sharper", p.body)))
    });

    let cfg = LoopConfig::new("example.t2i", 2, guides);
    let trace =
        run_pooled_loop(&pool, &judge, &refiner, PromptSpec::text("a lighthouse at dusk"), &cfg).unwrap();
    for r in &trace.records {
        println!("iteration {}: picked member {:?} ({})", r.iteration, r.selected_index, r.prompt.body);
    }
    println!("final quality {:.2}, {:?}", trace.final_artifact, trace.outcome);
}
