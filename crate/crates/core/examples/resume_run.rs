//! Halts a run after the keyframe stage, then resumes it.

use reelwright::orchestrator::{mock_config, resume, run_pipeline, RunOptions};
use reelwright::providers::mock::MockScenario;
use reelwright::schema::UserPrompt;
use reelwright::stages::StageId;

fn main() {
    let dir = std::env::temp_dir().join(format!("reelwright-resume-{}", std::process::id()));
    let prompt = UserPrompt::new("two sisters repair a storm-damaged lantern", 3, 4.0).unwrap();
    let halt = RunOptions { halt_after: Some(StageId::Keyframes), ..RunOptions::default() };

    let first = run_pipeline(&mock_config(3, MockScenario::default()), &prompt, &dir, &halt).unwrap();
    println!("halted with cursor at {:?}", first.state.cursor);
    for r in &first.state.stages {
        println!("  {:<10} {}", r.stage, r.status);
    }

    let done = resume(&dir, None, &RunOptions::default()).unwrap();
    println!("resumed: done = {}, {} artifacts", done.state.is_done(), done.state.manifest.len());
    std::fs::remove_dir_all(&dir).ok();
}
