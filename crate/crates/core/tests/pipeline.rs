use std::path::Path;

use reelwright::engine::ExhaustionPolicy;
use reelwright::orchestrator::{
    mock_config, resume, run_in_memory, run_pipeline, Cursor, RunError, RunOptions, RunState, StageStatus,
    REPORT_FILE,
};
use reelwright::providers::mock::{MockScenario, ScenarioEntry};
use reelwright::schema::{StoryOutput, UserPrompt};
use reelwright::stages::StageId;

fn prompt(n: u32) -> UserPrompt {
    UserPrompt::new("a lighthouse keeper finds a message in a bottle", n, 5.0).unwrap()
}

fn manifest(dir: &Path) -> std::collections::BTreeMap<String, String> {
    RunState::load(dir).unwrap().manifest
}

#[test]
fn clean_run_writes_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(
        &mock_config(3, MockScenario::default()),
        &prompt(3),
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap();
    assert!(out.state.is_done());
    assert!(out.state.stages.iter().all(|r| r.status == StageStatus::Complete));
    for rel in [
        "run.json",
        "config.json",
        "prompt.json",
        "script.v1.json",
        "script.final.json",
        "designs/designs.json",
        "characters/characters.json",
        "keyframes/shot-001.ppm",
        "keyframes/shot-003.ppm",
        "clips/shot-002.mvid",
        "audio/shot-003.wav",
        "audio/voice_plan.json",
        "traces/script/script.trace",
        "traces/audio/summary.json",
        "calls.log",
        "timeline.json",
        "report.json",
    ] {
        assert!(dir.path().join(rel).is_file(), "missing {rel}");
    }
    assert!(!dir.path().join("run.lock").exists());
    let timeline: StoryOutput =
        serde_json::from_slice(&std::fs::read(dir.path().join("timeline.json")).unwrap()).unwrap();
    assert_eq!(timeline.timeline.len(), 3);
    let m = manifest(dir.path());
    assert!(!m.contains_key("calls.log") && !m.contains_key(REPORT_FILE) && !m.contains_key("run.json"));
    let report = out.report.unwrap();
    assert!(report.compliance.values().all(|c| c.rate == 100.0), "{:?}", report.compliance);
}

#[test]
fn same_inputs_give_identical_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = mock_config(11, MockScenario::default());
    run_pipeline(&cfg, &prompt(4), a.path(), &RunOptions::default()).unwrap();
    run_pipeline(&cfg, &prompt(4), b.path(), &RunOptions::default()).unwrap();
    assert_eq!(manifest(a.path()), manifest(b.path()));
    let c = tempfile::tempdir().unwrap();
    run_pipeline(&mock_config(12, MockScenario::default()), &prompt(4), c.path(), &RunOptions::default())
        .unwrap();
    assert_ne!(manifest(a.path()), manifest(c.path()));
}

#[test]
fn halted_run_resumes_to_the_same_manifest() {
    let cfg = mock_config(5, MockScenario::default());
    let whole = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, &prompt(3), whole.path(), &RunOptions::default()).unwrap();

    let part = tempfile::tempdir().unwrap();
    let halt = RunOptions { halt_after: Some(StageId::Keyframes), ..RunOptions::default() };
    let first = run_pipeline(&cfg, &prompt(3), part.path(), &halt).unwrap();
    assert_eq!(first.state.cursor, Cursor::Stage(StageId::Animation));
    assert!(first.report.is_none());
    let keyframe = std::fs::read(part.path().join("keyframes/shot-001.ppm")).unwrap();
    let done = resume(part.path(), None, &RunOptions::default()).unwrap();
    assert!(done.state.is_done());
    assert_eq!(std::fs::read(part.path().join("keyframes/shot-001.ppm")).unwrap(), keyframe);
    assert_eq!(manifest(part.path()), manifest(whole.path()));
}

#[test]
fn resuming_a_finished_run_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&mock_config(1, MockScenario::default()), &prompt(2), dir.path(), &RunOptions::default())
        .unwrap();
    let log_before = std::fs::read(dir.path().join("calls.log")).unwrap();
    let again = resume(dir.path(), None, &RunOptions::default()).unwrap();
    assert!(again.state.is_done());
    assert_eq!(again.story.unwrap().pairs.len(), 2);
    assert_eq!(std::fs::read(dir.path().join("calls.log")).unwrap(), log_before);
}

#[test]
fn tampered_artifact_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let halt = RunOptions { halt_after: Some(StageId::Keyframes), ..RunOptions::default() };
    run_pipeline(&mock_config(1, MockScenario::default()), &prompt(2), dir.path(), &halt).unwrap();
    std::fs::write(dir.path().join("keyframes/shot-002.ppm"), b"P6\n1 1\n255\n\0\0\0").unwrap();
    match resume(dir.path(), None, &RunOptions::default()) {
        Err(RunError::ManifestMismatch { path, .. }) => assert_eq!(path, "keyframes/shot-002.ppm"),
        other => panic!("expected a manifest mismatch, got {other:?}"),
    }
}

#[test]
fn changed_config_needs_permission() {
    let dir = tempfile::tempdir().unwrap();
    let halt = RunOptions { halt_after: Some(StageId::Script), ..RunOptions::default() };
    run_pipeline(&mock_config(1, MockScenario::default()), &prompt(2), dir.path(), &halt).unwrap();
    let mut other = mock_config(1, MockScenario::default());
    other.config.pipeline.slack_seconds = 0.5;
    assert!(matches!(
        resume(dir.path(), Some(&other), &RunOptions::default()),
        Err(RunError::ConfigDigestMismatch { .. })
    ));
    let allowed = RunOptions { allow_config_change: true, ..RunOptions::default() };
    assert!(resume(dir.path(), Some(&other), &allowed).unwrap().state.is_done());
}

#[test]
fn strict_failure_then_fixed_scenario_completes() {
    let dir = tempfile::tempdir().unwrap();
    let broken = MockScenario::default()
        .with_entry(ScenarioEntry::new("script/generator/*/*").defect("STR-1", Some(2)));
    let mut cfg = mock_config(2, broken);
    cfg.config.pipeline.policy = ExhaustionPolicy::Fail;
    let err = run_pipeline(&cfg, &prompt(3), dir.path(), &RunOptions::default()).unwrap_err();
    assert_eq!(err.failed_stage(), Some(StageId::Script));
    let state = RunState::load(dir.path()).unwrap();
    assert_eq!(state.status(StageId::Script), StageStatus::Failed);
    assert!(state.stages[0].error.as_deref().unwrap().contains("exhausted"));

    let mut fixed = mock_config(2, MockScenario::default());
    fixed.config.pipeline.policy = ExhaustionPolicy::Fail;
    let opts = RunOptions { allow_config_change: true, ..RunOptions::default() };
    let out = resume(dir.path(), Some(&fixed), &opts).unwrap();
    assert!(out.state.is_done());
    assert_eq!(out.story.unwrap().pairs.len(), 3);
}

#[test]
fn budget_override_caps_the_script_loop() {
    let scenario = MockScenario::default()
        .with_entry(ScenarioEntry::new("script/generator/*/*").defect("STR-1", Some(2)));
    let mut cfg = mock_config(2, scenario);
    cfg.config.pipeline.budgets.script = 1;
    let run = run_in_memory(&cfg, &prompt(3)).unwrap();
    let script = run.report.loops.iter().find(|l| l.stage == StageId::Script).unwrap();
    assert_eq!(script.iterations, 1);
    assert_eq!(script.max_iterations, 1);
    assert!(run.warnings.iter().any(|w| w.contains("STR-1")), "{:?}", run.warnings);
}

#[test]
fn existing_run_and_missing_run_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mock_config(1, MockScenario::default());
    let halt = RunOptions { halt_after: Some(StageId::Script), ..RunOptions::default() };
    run_pipeline(&cfg, &prompt(1), dir.path(), &halt).unwrap();
    assert!(matches!(
        run_pipeline(&cfg, &prompt(1), dir.path(), &RunOptions::default()),
        Err(RunError::AlreadyExists(_))
    ));
    assert!(matches!(
        resume(&dir.path().join("nope"), None, &RunOptions::default()),
        Err(RunError::NotARun(_))
    ));
}

#[test]
fn single_shot_story_without_characters_is_valid() {
    let run = run_in_memory(&mock_config(9, MockScenario::default()), &prompt(1)).unwrap();
    let story = &run.products.audio.as_ref().unwrap().story;
    assert_eq!(story.pairs.len(), 1);
    assert_eq!(story.timeline[0].start_seconds, 0.0);
}
