//! Runs the whole pipeline on the mock backend into a temporary directory
//! and prints the timeline.

use reelwright::orchestrator::{mock_config, run_pipeline, RunOptions};
use reelwright::providers::mock::MockScenario;
use reelwright::schema::UserPrompt;

fn main() {
    let dir = std::env::temp_dir().join(format!("reelwright-example-{}", std::process::id()));
    let prompt = UserPrompt::new("a lighthouse keeper finds a message in a bottle", 4, 5.0).unwrap();
    let out = run_pipeline(&mock_config(42, MockScenario::default()), &prompt, &dir, &RunOptions::default())
        .unwrap();

    let story = out.story.expect("finished run has a story");
    for (cue, pair) in story.timeline.iter().zip(&story.pairs) {
        println!(
            "{:>6.2}s  clip {} ({:.1}s)  audio {} ({:.2}s)",
            cue.start_seconds,
            pair.clip.id,
            pair.clip.duration_seconds.unwrap_or(0.0),
            pair.audio.id,
            pair.audio.duration_seconds.unwrap_or(0.0)
        );
    }
    println!("{} artifacts under {}", out.state.manifest.len(), dir.display());
    std::fs::remove_dir_all(&dir).ok();
}
