//! Acceptance criteria. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reelwright::engine::ExhaustionPolicy;
use reelwright::guidelines::{check_structure, RuleId};
use reelwright::orchestrator::{
    build_context, loop_kind, mock_config, resume, run_ablation, run_in_memory, run_pipeline, AblationReport,
    DefectModel, MetricsReport, RunOptions, RunState, REPORT_FILE,
};
use reelwright::providers::mock::MockScenario;
use reelwright::schema::{
    location_pair, validate_story_output, AssetKind, AssetRef, CharacterDef, DesignElement, Script, Shot,
    ShotDesign, UserPrompt,
};
use reelwright::stages::{
    build_animation_prompt, build_keyframe_prompt, fit_subtitle, Agent, Budgets, StageError, StageId,
    ANIMATION_ELEMENTS, KEYFRAME_ELEMENTS,
};

// Iteration budgets stated for the reference system.
const BUDGET_SCRIPT: u32 = 4;
const BUDGET_SHOT: u32 = 4;
const BUDGET_VOICE: u32 = 4;
const BUDGET_T2I: u32 = 2;
const BUDGET_I2V: u32 = 1;
const BUDGET_SUBTITLE: u32 = 5;

const BUDGET_SECONDS: u64 = 10;
const ORACLE_SECONDS: u64 = 60;
const ORACLE_MIN_INSTANCES: usize = 10_000;
const ABLATION_TRIALS: usize = 400;
const ABLATION_SHOTS: u32 = 3;
/// (family, target compliance without its agent).
const DEFICIT_TARGETS: [(Agent, &str, f64); 3] = [
    (Agent::ShotReviewer, "shot_design", 85.0),
    (Agent::VoiceReviewer, "voice", 92.0),
    (Agent::SubtitleRefiner, "audio_fit", 60.0),
];
const DEFICIT_TOLERANCE: f64 = 5.0;
const SIGN_TEST_ALPHA: f64 = 0.01;
const FIT_PAIRS: usize = 1000;
const FIT_SECONDS: u64 = 30;
const REPLAY_SECONDS: u64 = 60;
const CONTRACT_SHOTS: [u32; 3] = [1, 3, 8];

const PROMPT: &str = "a lighthouse keeper finds a message in a bottle";

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(started: Instant, limit: u64) -> Result<Duration, String> {
    let took = started.elapsed();
    check(took <= Duration::from_secs(limit), format!("took {took:.1?}, limit {limit}s"))?;
    Ok(took)
}

fn trace_files(dir: &Path, out: &mut BTreeMap<String, serde_json::Value>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            trace_files(&path, out);
        } else if path.extension().is_some_and(|e| e == "trace") {
            let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
            out.insert(v["loop_id"].as_str().unwrap().to_string(), v);
        }
    }
}

fn budget_conformance() -> Verdict {
    let started = Instant::now();
    let defaults = Budgets::default();
    check(
        (defaults.script, defaults.shot, defaults.voice, defaults.t2i, defaults.i2v, defaults.subtitle)
            == (BUDGET_SCRIPT, BUDGET_SHOT, BUDGET_VOICE, BUDGET_T2I, BUDGET_I2V, BUDGET_SUBTITLE),
        format!("default budgets {defaults:?} differ from the stated constants"),
    )?;
    let dir = tempfile::tempdir().unwrap();
    let prompt = UserPrompt::new(PROMPT, 3, 5.0).unwrap();
    let out =
        run_pipeline(&mock_config(7, MockScenario::default()), &prompt, dir.path(), &RunOptions::default())
            .map_err(|e| e.to_string())?;
    let report = out.report.ok_or("no report")?;
    let ceilings = [
        ("script", BUDGET_SCRIPT),
        ("shot", BUDGET_SHOT),
        ("voice", BUDGET_VOICE),
        ("t2i", BUDGET_T2I),
        ("i2v", BUDGET_I2V),
        ("subtitle", BUDGET_SUBTITLE),
    ];
    for (kind, cap) in ceilings {
        let got = *report.max_iterations.get(kind).ok_or(format!("no {kind} loop recorded"))?;
        check(got <= cap, format!("{kind}: {got} iterations > {cap}"))?;
    }
    check(report.max_iterations["i2v"] == BUDGET_I2V, "i2v loops must run exactly once")?;

    let mut traces = BTreeMap::new();
    trace_files(&dir.path().join("traces"), &mut traces);
    let pool_size = 3;
    let mut fan_outs = 0;
    for l in report.loops.iter().filter(|l| loop_kind(l) == "i2v") {
        let t = traces.get(&l.loop_id).ok_or(format!("no trace for {}", l.loop_id))?;
        let records = t["records"].as_array().unwrap();
        check(records.len() == 1, format!("{}: {} iterations", l.loop_id, records.len()))?;
        let n = records[0]["candidates"].as_array().unwrap().len();
        check(n == pool_size, format!("{}: fan-out of {n}, pool has {pool_size}", l.loop_id))?;
        fan_outs += 1;
    }
    let took = within(started, BUDGET_SECONDS)?;
    Ok(format!(
        "max iterations {:?}; {fan_outs} i2v loops with one fan-out each; {took:.2?}",
        report.max_iterations
    ))
}

/// Independent pair-enumeration oracle for the structure guide.
fn oracle(locs: &[usize], casts: &[u8], continuity: &[bool], adjacency: u8) -> BTreeSet<(RuleId, u32)> {
    let adjacent = |a: usize, b: usize| {
        let bit = match (a.min(b), a.max(b)) {
            (0, 1) => 1,
            (0, 2) => 2,
            (1, 2) => 4,
            _ => 0,
        };
        adjacency & bit != 0
    };
    let mut out = BTreeSet::new();
    for j in 1..locs.len() {
        let shot = j as u32 + 1;
        if locs[j - 1] == locs[j] {
            out.insert((RuleId::Str1, shot));
        } else if adjacent(locs[j - 1], locs[j]) {
            out.insert((RuleId::Str2, shot));
        }
        if !continuity[j] && casts[j - 1] & casts[j] != 0 {
            out.insert((RuleId::Str3, shot));
        }
    }
    out
}

const LOC_NAMES: [&str; 3] = ["pier", "lamp room", "harbour"];
const CAST: [&str; 3] = ["mara", "tom", "ives"];

fn build(locs: &[usize], casts: &[u8], continuity: &[bool], adjacency: u8) -> Script {
    let shots: Vec<Shot> = (0..locs.len())
        .map(|i| {
            Shot::new(i as u32 + 1, LOC_NAMES[locs[i]], "waves")
                .with_characters((0..3).filter(|b| casts[i] & (1 << b) != 0).map(|b| CAST[b]))
                .with_continuity(continuity[i])
        })
        .collect();
    let used: BTreeSet<usize> = locs.iter().copied().collect();
    let location_adjacency = [(0, 1, 1u8), (0, 2, 2), (1, 2, 4)]
        .into_iter()
        .filter(|(a, b, bit)| adjacency & bit != 0 && used.contains(a) && used.contains(b))
        .map(|(a, b, _)| location_pair(LOC_NAMES[a], LOC_NAMES[b]))
        .collect();
    Script {
        title: "T".into(),
        characters: CAST
            .iter()
            .map(|c| CharacterDef {
                id: c.to_string(),
                name: c.to_string(),
                appearance: "coat".into(),
                lora_ref: None,
            })
            .collect(),
        shots,
        location_adjacency,
    }
}

/// Odometer over `radix^digits` values.
fn odometer(digits: usize, radix: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = radix.pow(digits as u32);
    (0..total).map(move |mut k| {
        (0..digits)
            .map(|_| {
                let d = k % radix;
                k /= radix;
                d
            })
            .collect()
    })
}

fn structure_oracle() -> Verdict {
    let started = Instant::now();
    let mut instances = 0usize;
    let mut mismatches = Vec::new();
    let mut compare = |locs: &[usize], casts: &[u8], cont: &[bool], adj: u8| {
        let script = build(locs, casts, cont, adj);
        let got: BTreeSet<(RuleId, u32)> =
            check_structure(&script).iter().map(|f| (f.rule_id, f.shot_index.unwrap())).collect();
        let want = oracle(locs, casts, cont, adj);
        instances += 1;
        if got != want && mismatches.len() < 3 {
            mismatches.push(format!("{locs:?} {casts:?} {cont:?} adj={adj}: got {got:?}, want {want:?}"));
        }
    };
    // Every script of one to three shots over the full per-shot state
    // (location, cast subset, continuity flag) and every adjacency relation.
    for n in 1..=3 {
        for state in odometer(n, 3 * 8 * 2) {
            let locs: Vec<usize> = state.iter().map(|s| s % 3).collect();
            let casts: Vec<u8> = state.iter().map(|s| ((s / 3) % 8) as u8).collect();
            let cont: Vec<bool> = state.iter().map(|s| s / 24 == 1).collect();
            for adj in 0..8 {
                compare(&locs, &casts, &cont, adj);
            }
        }
    }
    // Every location sequence of four to eight shots under every adjacency
    // relation, with every cast sequence drawn from {none, mara, mara+tom}
    // for up to five shots and a seeded cast draw beyond that.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for n in 4..=8 {
        for locs in odometer(n, 3) {
            for adj in 0..8 {
                if n <= 5 {
                    for cs in odometer(n, 3) {
                        let casts: Vec<u8> = cs.iter().map(|c| [0u8, 1, 3][*c]).collect();
                        let cont: Vec<bool> = cs.iter().map(|c| *c == 2).collect();
                        compare(&locs, &casts, &cont, adj);
                    }
                } else {
                    let casts: Vec<u8> = (0..n).map(|_| rng.gen_range(0..8)).collect();
                    let cont: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
                    compare(&locs, &casts, &cont, adj);
                }
            }
        }
    }
    check(mismatches.is_empty(), format!("mismatches: {}", mismatches.join("; ")))?;
    check(instances >= ORACLE_MIN_INSTANCES, format!("only {instances} instances"))?;
    let took = within(started, ORACLE_SECONDS)?;
    Ok(format!("{instances} scripts, 0 mismatches, {took:.1?}"))
}

fn ablation() -> &'static Result<AblationReport, String> {
    static REPORT: OnceLock<Result<AblationReport, String>> = OnceLock::new();
    REPORT.get_or_init(|| {
        let prompt = UserPrompt::new(PROMPT, ABLATION_SHOTS, 5.0).unwrap();
        let toggles: BTreeSet<Agent> = DEFICIT_TARGETS.iter().map(|t| t.0).chain([Agent::T2i3e]).collect();
        run_ablation(
            &mock_config(2024, MockScenario::default()),
            &prompt,
            &toggles,
            ABLATION_TRIALS,
            &DefectModel::default(),
        )
        .map_err(|e| e.to_string())
    })
}

fn compliance_restoration() -> Verdict {
    let model = DefectModel::default();
    check(
        (model.shot_element_omission, model.voice_plan, model.oversized_subtitle) == (0.15, 0.08, 0.40),
        "defect model rates differ from 15% / 8% / 40%",
    )?;
    let report = ablation().as_ref().map_err(Clone::clone)?;
    let all = report.row("all agents").ok_or("no baseline row")?;
    let mut details = Vec::new();
    for (agent, family, target) in DEFICIT_TARGETS {
        let with = all.compliance[family];
        check(with == 100.0, format!("{family} with all agents is {with}, expected exactly 100.0"))?;
        let row = report.row(&format!("w/o {agent}")).ok_or(format!("no row for {agent}"))?;
        let without = row.compliance[family];
        check(
            (without - target).abs() <= DEFICIT_TOLERANCE,
            format!("{family} without {agent} is {without}, expected {target} +/- {DEFICIT_TOLERANCE}"),
        )?;
        check(row.failed_runs == 0 && all.failed_runs == 0, "some trials failed")?;
        details.push(format!("{family} {without:.1} -> 100.0"));
    }
    Ok(format!("{} trials: {}", report.trials, details.join(", ")))
}

fn refinement_direction() -> Verdict {
    check(DefectModel::default().image_naturalness == 0.25, "naturalness defect rate is not 25%")?;
    let report = ablation().as_ref().map_err(Clone::clone)?;
    let family = "image_naturalness";
    let with = report.row("all agents").ok_or("no baseline row")?.compliance[family];
    let without = report.row("w/o t2i_3e").ok_or("no w/o t2i_3e row")?.compliance[family];
    let t = report
        .sign_tests
        .iter()
        .find(|t| t.toggle == Agent::T2i3e && t.family == family)
        .ok_or("no sign test")?;
    check(without < with, format!("naturalness {without} without vs {with} with refinement"))?;
    check(t.p_value < SIGN_TEST_ALPHA, format!("sign test p = {:.3e}", t.p_value))?;
    Ok(format!(
        "naturalness {without:.1} -> {with:.1}; {} wins, {} losses, p = {:.2e}",
        t.wins, t.losses, t.p_value
    ))
}

fn fit_guarantee() -> Verdict {
    let started = Instant::now();
    let mut cfg = mock_config(11, MockScenario::default());
    cfg.config.pipeline.policy = ExhaustionPolicy::Fail;
    let slack = cfg.config.pipeline.slack_seconds;
    let budget = cfg.config.pipeline.budgets.subtitle;
    let ctx = build_context(&cfg, None).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xf17);
    let (mut violations, mut failures, mut refined) = (0, 0, 0);
    let mut worst_attempts = 0;
    for i in 0..FIT_PAIRS {
        let words = rng.gen_range(1..=60);
        let clip = rng.gen_range(0.5..10.0);
        let subtitle: Vec<String> = (0..words).map(|w| format!("word{w}")).collect();
        let subtitle = subtitle.join(" ");
        let shot = Shot::new(i as u32 + 1, "pier", "waves").with_subtitle(subtitle.clone());
        match fit_subtitle(&ctx, &shot, None, clip) {
            Ok(f) => {
                if f.audio_seconds > clip + slack || !f.fits || f.attempts > budget {
                    violations += 1;
                }
                if !is_truncation(&subtitle, &f.subtitle) {
                    return Err(format!("`{}` is not a truncation of `{subtitle}`", f.subtitle));
                }
                if f.attempts > 1 {
                    refined += 1;
                }
                worst_attempts = worst_attempts.max(f.attempts);
            }
            // An empty subtitle always fits, so truncation must never give up.
            Err(StageError::FitFailure { .. }) => failures += 1,
            Err(e) => return Err(e.to_string()),
        }
    }
    check(violations == 0, format!("{violations} fit violations"))?;
    check(failures == 0, format!("{failures} FitFailures although empty audio fits"))?;
    let took = within(started, FIT_SECONDS)?;
    Ok(format!(
        "{FIT_PAIRS} pairs, {refined} refined, at most {worst_attempts} attempts, 0 violations, {took:.2?}"
    ))
}

/// `fitted` keeps leading words of `original`, allowing added final punctuation.
fn is_truncation(original: &str, fitted: &str) -> bool {
    let orig: Vec<&str> = original.split_whitespace().collect();
    let kept: Vec<&str> = fitted.split_whitespace().collect();
    kept.len() <= orig.len()
        && kept
            .iter()
            .zip(&orig)
            .all(|(k, o)| k == o || k.trim_end_matches('.') == o.trim_end_matches([',', ';', ':', '-']))
}

fn without_timing(mut r: MetricsReport) -> MetricsReport {
    r.stage_seconds.clear();
    r
}

fn replay_and_resume() -> Verdict {
    let started = Instant::now();
    let cfg = mock_config(99, DefectModel::default().scenario(99, 4));
    let prompt = UserPrompt::new(PROMPT, 4, 5.0).unwrap();
    let report_of = |dir: &Path| -> MetricsReport {
        without_timing(serde_json::from_slice(&std::fs::read(dir.join(REPORT_FILE)).unwrap()).unwrap())
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, &prompt, a.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
    run_pipeline(&cfg, &prompt, b.path(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let reference = RunState::load(a.path()).unwrap().manifest;
    check(reference == RunState::load(b.path()).unwrap().manifest, "replayed manifests differ")?;
    check(report_of(a.path()) == report_of(b.path()), "replayed reports differ")?;

    for stage in StageId::ALL {
        let dir = tempfile::tempdir().unwrap();
        let halt = RunOptions { halt_after: Some(stage), ..RunOptions::default() };
        run_pipeline(&cfg, &prompt, dir.path(), &halt).map_err(|e| e.to_string())?;
        let done = resume(dir.path(), None, &RunOptions::default()).map_err(|e| e.to_string())?;
        check(done.state.is_done(), format!("resume after {stage} did not finish"))?;
        check(
            RunState::load(dir.path()).unwrap().manifest == reference,
            format!("manifest after halting at {stage} differs"),
        )?;
        check(
            report_of(dir.path()) == report_of(a.path()),
            format!("report after halting at {stage} differs"),
        )?;
    }
    let took = within(started, REPLAY_SECONDS)?;
    Ok(format!("{} artifacts identical across replay and 6 resume points, {took:.2?}", reference.len()))
}

fn element_partition() -> Verdict {
    let t2i: BTreeSet<DesignElement> = KEYFRAME_ELEMENTS.into_iter().collect();
    let i2v: BTreeSet<DesignElement> = ANIMATION_ELEMENTS.into_iter().collect();
    use DesignElement::*;
    check(
        t2i == [Background, CharacterPose, PropDescription, CameraPosition, LightingDesign].into(),
        format!("keyframe elements {t2i:?}"),
    )?;
    check(
        i2v == [Background, CharacterAction, PropDescription, CameraMovement, LightingDesign].into(),
        format!("animation elements {i2v:?}"),
    )?;
    let sym: BTreeSet<DesignElement> = t2i.symmetric_difference(&i2v).copied().collect();
    check(
        sym == [CharacterPose, CameraPosition, CharacterAction, CameraMovement].into(),
        format!("{sym:?}"),
    )?;

    let shot = Shot::new(1, "gallery", "she looks out");
    let mut design = ShotDesign { shot_index: 1, ..ShotDesign::default() };
    for e in DesignElement::ALL {
        *design.element_mut(e) = format!("value-{e}");
    }
    let key = AssetRef::new("kf", AssetKind::Image);
    let kp = build_keyframe_prompt(&shot, &design, &[]).map_err(|e| e.to_string())?.body;
    let ap = build_animation_prompt(&shot, &design, &[], Some(&key)).map_err(|e| e.to_string())?.body;
    for e in DesignElement::ALL {
        let marker = format!("value-{e}");
        check(kp.contains(&marker) == t2i.contains(&e), format!("keyframe prompt and {e}"))?;
        check(ap.contains(&marker) == i2v.contains(&e), format!("animation prompt and {e}"))?;
    }
    Ok("pose/camera position only in T2I, action/camera movement only in I2V".into())
}

fn output_contract() -> Verdict {
    let mut details = Vec::new();
    for n in CONTRACT_SHOTS {
        let cfg = mock_config(n as u64, MockScenario::default());
        let prompt = UserPrompt::new(PROMPT, n, 5.0).unwrap();
        let run = run_in_memory(&cfg, &prompt).map_err(|e| e.to_string())?;
        let script = run.products.script.as_ref().unwrap();
        let story = &run.products.audio.as_ref().unwrap().story;
        let violations = validate_story_output(story, script, cfg.config.pipeline.slack_seconds);
        check(violations.is_empty(), format!("N={n}: {violations:?}"))?;
        check(story.pairs.len() == n as usize, format!("N={n}: {} pairs", story.pairs.len()))?;
        details.push(format!("N={n}: {} pairs", story.pairs.len()));
    }
    Ok(details.join(", "))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("budget conformance", budget_conformance),
        ("structure oracle equivalence", structure_oracle),
        ("compliance restoration", compliance_restoration),
        ("refinement ablation direction", refinement_direction),
        ("subtitle fit guarantee", fit_guarantee),
        ("replay and resume", replay_and_resume),
        ("prompt element partition", element_partition),
        ("output contract", output_contract),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match verdict {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
