//! A single-candidate loop with a scripted examiner.
//!
//! The examiner asks for a revision until the prompt mentions the fog, so
//! the loop reaches consensus on the second iteration.

use reelwright::engine::{run_loop, FnExaminer, FnGenerator, FnRefiner, LoopConfig, Turn};
use reelwright::guidelines::{Finding, RuleId};
use reelwright::schema::{Feedback, GuidelineSet, PromptSpec};

fn main() {
    let writer = FnGenerator(|p: &PromptSpec, _: &Turn| Ok(format!("DRAFT: {}", p.body)));
    let editor = FnExaminer::new("editor", |draft: &String, _: &GuidelineSet, _: &Turn| {
        Ok(if draft.contains("fog") {
            Feedback::approve("editor")
        } else {
            Feedback::revise("editor", vec![Finding::at(RuleId::Con1, 1, "say what the weather is")])
        })
    });
    let refiner = FnRefiner(|p: &PromptSpec, _: &String, fb: &[Feedback], _: &Turn| {
        let notes: Vec<String> =
            fb.iter().flat_map(|f| f.findings.iter().map(|x| x.message.clone())).collect();
        println!("refining after: {}", notes.join("; "));
        Ok(PromptSpec::text(format!("{} in thick fog", p.body)))
    });

    let cfg = LoopConfig::new("example.script", 4, GuidelineSet::content()).with_seed(7);
    let trace = run_loop(&writer, &[&editor], &refiner, PromptSpec::text("a ship nears the rocks"), &cfg)
        .expect("loop runs");

    for r in &trace.records {
        println!("iteration {}: {}", r.iteration, r.prompt.body);
    }
    println!("{:?} after {} iterations: {}", trace.outcome, trace.iterations(), trace.final_artifact);
}
