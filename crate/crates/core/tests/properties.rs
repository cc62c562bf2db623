use std::collections::{BTreeMap, BTreeSet, HashSet};

use proptest::prelude::*;

use reelwright::engine::{
    run_loop, run_pooled_loop, ExhaustionPolicy, FnEvaluator, FnExaminer, FnGenerator, FnRefiner, Generate,
    LoopConfig, Outcome, Turn,
};
use reelwright::guidelines::{
    check_content, check_structure, check_style, suggest_transitional_shot, Finding, RuleId,
};
use reelwright::orchestrator::{build_context, loop_kind, mock_config, run_in_memory, DefectModel};
use reelwright::providers::mock::MockScenario;
use reelwright::providers::ProviderError;
use reelwright::schema::{
    location_pair, parse_script, serialize_script, CharacterDef, Feedback, GuidelineSet, PromptSpec, Script,
    Shot, ShotDesign, UserPrompt,
};
use reelwright::stages::{build_animation_prompt, build_keyframe_prompt, fit_subtitle, StageError};

const LOCATIONS: [&str; 4] = ["pier", "lamp room", "cliff path", "harbour"];
const CAST: [&str; 3] = ["mara", "tom", "ives"];

fn def(id: &str) -> CharacterDef {
    CharacterDef {
        id: id.into(),
        name: id.to_uppercase(),
        appearance: format!("{id} in a wool coat"),
        lora_ref: None,
    }
}

prop_compose! {
    fn arb_shot(cast: usize)(
        loc in 0..LOCATIONS.len(),
        members in proptest::sample::subsequence((0..cast.max(1)).collect::<Vec<_>>(), 0..=cast),
        content in "[a-z]{1,8}( [a-z]{1,8}){0,5}",
        subtitle in "[A-Za-zé',.]{0,8}( [A-Za-zé',.]{1,8}){0,12}",
        action in proptest::option::of("[a-z]{1,8}"),
        continuity in any::<bool>(),
        silent in any::<bool>(),
    ) -> Shot {
        let mut s = Shot::new(0, LOCATIONS[loc], content)
            .with_characters(members.iter().filter(|m| **m < cast).map(|m| CAST[*m]))
            .with_subtitle(subtitle)
            .with_continuity(continuity);
        s.action = action;
        s.silent = silent;
        s
    }
}

fn arb_script() -> impl Strategy<Value = Script> {
    (0..=CAST.len())
        .prop_flat_map(|cast| {
            (
                Just(cast),
                "[A-Z][a-z]{0,10}( [a-z]{1,6}){0,3}",
                proptest::collection::vec(arb_shot(cast), 1..=8),
                proptest::collection::vec((0..LOCATIONS.len(), 0..LOCATIONS.len()), 0..4),
            )
        })
        .prop_map(|(cast, title, mut shots, pairs)| {
            for (i, s) in shots.iter_mut().enumerate() {
                s.index = i as u32 + 1;
            }
            let used: BTreeSet<&str> = shots.iter().map(|s| s.location_id.as_str()).collect();
            let location_adjacency = pairs
                .into_iter()
                .filter(|(a, b)| a != b && used.contains(LOCATIONS[*a]) && used.contains(LOCATIONS[*b]))
                .map(|(a, b)| location_pair(LOCATIONS[a], LOCATIONS[b]))
                .collect();
            Script {
                title,
                characters: CAST[..cast].iter().map(|c| def(c)).collect(),
                shots,
                location_adjacency,
            }
        })
}

#[derive(Debug, Clone)]
enum Mutation {
    Flip(usize, u8),
    Delete(usize, usize),
    Insert(usize, Vec<u8>),
    Duplicate(usize, usize),
}

fn apply(bytes: &[u8], m: &Mutation) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let at = |i: usize| i % (out.len().max(1) + 1);
    match m {
        Mutation::Flip(i, x) => {
            if !out.is_empty() {
                let i = i % out.len();
                out[i] ^= x | 1;
            }
        }
        Mutation::Delete(i, n) => {
            let i = at(*i).min(out.len());
            let end = (i + n).min(out.len());
            out.drain(i..end);
        }
        Mutation::Insert(i, b) => {
            let i = at(*i).min(out.len());
            out.splice(i..i, b.iter().copied());
        }
        Mutation::Duplicate(i, n) => {
            let i = at(*i).min(out.len());
            let end = (i + n).min(out.len());
            let chunk = out[i..end].to_vec();
            out.splice(end..end, chunk);
        }
    }
    out
}

fn arb_mutation() -> impl Strategy<Value = Mutation> {
    prop_oneof![
        (any::<usize>(), any::<u8>()).prop_map(|(i, x)| Mutation::Flip(i, x)),
        (any::<usize>(), 1usize..40).prop_map(|(i, n)| Mutation::Delete(i, n)),
        (
            any::<usize>(),
            prop_oneof![
                Just(b"\"".to_vec()),
                Just(b"{}".to_vec()),
                Just(b",".to_vec()),
                Just(b"\"mara\"".to_vec()),
                Just(b"-1".to_vec()),
                proptest::collection::vec(any::<u8>(), 1..6),
            ]
        )
            .prop_map(|(i, b)| Mutation::Insert(i, b)),
        (any::<usize>(), 1usize..60).prop_map(|(i, n)| Mutation::Duplicate(i, n)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scripts_round_trip(s in arb_script()) {
        let bytes = serialize_script(&s);
        let back = parse_script(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_script(&back), bytes);
    }

    #[test]
    fn parsed_scripts_have_no_dangling_references(s in arb_script(), drop in 0usize..4) {
        let mut s = s;
        if drop < s.characters.len() {
            s.characters.remove(drop);
        }
        if let Ok(p) = parse_script(&serialize_script(&s)) {
            let ids: HashSet<&str> = p.characters.iter().map(|c| c.id.as_str()).collect();
            for shot in &p.shots {
                for c in &shot.character_ids {
                    prop_assert!(ids.contains(c.as_str()));
                }
            }
            let locs = p.locations();
            for (a, b) in &p.location_adjacency {
                prop_assert!(locs.contains(a.as_str()) && locs.contains(b.as_str()));
            }
        }
    }

    #[test]
    fn checks_are_pure_and_ordered(s in arb_script()) {
        for (a, b) in [
            (check_structure(&s), check_structure(&s)),
            (check_content(&s), check_content(&s)),
            (check_style(&s, 4), check_style(&s, 4)),
        ] {
            prop_assert_eq!(&a, &b);
            let keys: Vec<(u32, RuleId)> = a.iter().map(|f| (f.shot_index.unwrap_or(0), f.rule_id)).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            prop_assert_eq!(keys, sorted);
        }
    }

    #[test]
    fn each_repair_reduces_structure_findings(s in arb_script()) {
        let before = check_structure(&s);
        for f in before.iter().filter(|f| matches!(f.rule_id, RuleId::Str1 | RuleId::Str3)) {
            let shot = suggest_transitional_shot(&s, f).unwrap();
            let repaired = s.with_inserted_shot(shot);
            let after = check_structure(&repaired);
            prop_assert!(after.len() < before.len(), "{} -> {:?}", f, after);
        }
    }

    #[test]
    fn keyframe_and_animation_prompts_are_pure(s in arb_script(), text in "[a-z ]{1,20}") {
        let shot = &s.shots[0];
        let mut design = ShotDesign { shot_index: shot.index, ..ShotDesign::default() };
        for e in reelwright::schema::DesignElement::ALL {
            *design.element_mut(e) = format!("{text} {e}");
        }
        let key = reelwright::schema::AssetRef::new("kf", reelwright::schema::AssetKind::Image);
        prop_assert_eq!(
            build_keyframe_prompt(shot, &design, &s.characters).unwrap(),
            build_keyframe_prompt(shot, &design, &s.characters).unwrap()
        );
        prop_assert_eq!(
            build_animation_prompt(shot, &design, &s.characters, Some(&key)).unwrap(),
            build_animation_prompt(shot, &design, &s.characters, Some(&key)).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mutated_documents_never_panic(ms in proptest::collection::vec(arb_mutation(), 1..4)) {
        let base = serialize_script(&Script {
            title: "Tides".into(),
            characters: vec![def("mara"), def("tom")],
            shots: vec![
                Shot::new(1, "pier", "waves break").with_characters(["mara"]).with_subtitle("the sea"),
                Shot::new(2, "cliff path", "wind").with_characters(["tom"]).with_subtitle("it rises"),
                Shot::new(3, "harbour", "boats rock").with_subtitle("home").with_continuity(true),
            ],
            location_adjacency: [location_pair("pier", "harbour")].into(),
        });
        let mut bytes = base;
        for m in &ms {
            bytes = apply(&bytes, m);
        }
        if let Ok(s) = parse_script(&bytes) {
            prop_assert!(s.violations().is_empty());
            prop_assert_eq!(parse_script(&serialize_script(&s)).unwrap(), s);
        }
    }
}

fn approves_at(
    round: u32,
) -> impl Fn(&u32, &GuidelineSet, &Turn) -> Result<Feedback, ProviderError> + Send + Sync {
    move |_, _, t| {
        Ok(if t.iteration >= round {
            Feedback::approve("ex")
        } else {
            Feedback::revise("ex", vec![Finding::at(RuleId::Str1, 2, format!("round {}", t.iteration))])
        })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn single_loop_trace_shape(budget in 1u32..6, round in 1u32..8, second in 1u32..8, seed in any::<u64>()) {
        let gen = FnGenerator(|_: &PromptSpec, t: &Turn| Ok::<u32, ProviderError>(t.iteration));
        let a = FnExaminer::new("a", approves_at(round));
        let b = FnExaminer::new("b", approves_at(second));
        let refine = FnRefiner(|p: &PromptSpec, _: &u32, _: &[Feedback], _: &Turn| Ok(PromptSpec::text(format!("{}+", p.body))));
        let cfg = LoopConfig::new("prop", budget, GuidelineSet::structure()).with_seed(seed);
        let t = run_loop(&gen, &[&a, &b], &refine, PromptSpec::text("go"), &cfg).unwrap();
        let k = t.iterations();
        prop_assert_eq!(k, budget.min(round.max(second)));
        prop_assert!(k <= budget);
        prop_assert_eq!(t.records.iter().map(|r| r.iteration).collect::<Vec<_>>(), (1..=k).collect::<Vec<_>>());
        prop_assert_eq!(t.refiner_calls, k - 1);
        prop_assert_eq!(t.outcome == Outcome::Consensus, t.records.last().unwrap().all_approved());

        let again = run_loop(&gen, &[&a, &b], &refine, PromptSpec::text("go"), &cfg).unwrap();
        prop_assert_eq!(serde_json::to_vec(&t).unwrap(), serde_json::to_vec(&again).unwrap());

        let strict = cfg.clone().with_policy(ExhaustionPolicy::Fail);
        let r = run_loop(&gen, &[&a, &b], &refine, PromptSpec::text("go"), &strict);
        prop_assert_eq!(r.is_ok(), t.outcome == Outcome::Consensus);
    }

    #[test]
    fn pooled_selection_survives_scaling(
        scores in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 6), 1..5),
        scale in 0.05f64..1.0,
    ) {
        let members: Vec<_> = (0..scores.len())
            .map(|i| FnGenerator(move |_: &PromptSpec, _: &Turn| Ok::<usize, ProviderError>(i)))
            .collect();
        let pool: Vec<&dyn Generate<usize>> = members.iter().map(|m| m as &dyn Generate<usize>).collect();
        let guides = GuidelineSet::image();
        let pick = |factor: f64| {
            let axes = guides.axes.clone();
            let scores = scores.clone();
            let judge = FnEvaluator(move |cands: &[(usize, &usize)], _: &Turn| {
                Ok(cands
                    .iter()
                    .map(|(_, m)| {
                        let s: BTreeMap<String, f64> =
                            axes.iter().zip(&scores[**m]).map(|(a, v)| (a.clone(), v * factor)).collect();
                        Feedback::revise("judge", vec![]).with_scores(s)
                    })
                    .collect())
            });
            let refine = FnRefiner(|p: &PromptSpec, _: &usize, _: &[Feedback], _: &Turn| Ok(p.clone()));
            let cfg = LoopConfig::new("pool", 1, guides.clone());
            run_pooled_loop(&pool, &judge, &refine, PromptSpec::text("x"), &cfg).unwrap().records[0].selected_index
        };
        prop_assert_eq!(pick(1.0), pick(scale));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_replay_and_conserve_cardinality(seed in any::<u64>(), shots in 1u32..7, defects in any::<bool>()) {
        let scenario = if defects { DefectModel::default().scenario(seed, shots) } else { MockScenario::default() };
        let cfg = mock_config(seed, scenario);
        let prompt = UserPrompt::new("a keeper and a storm", shots, 4.0).unwrap();
        let a = run_in_memory(&cfg, &prompt).unwrap();
        let b = run_in_memory(&cfg, &prompt).unwrap();
        prop_assert_eq!(&a.report, &b.report);
        let n = shots as usize;
        let p = &a.products;
        prop_assert_eq!(p.designs.as_ref().unwrap().len(), n);
        prop_assert_eq!(p.keyframes.as_ref().unwrap().len(), n);
        prop_assert_eq!(p.clips.as_ref().unwrap().len(), n);
        let audio = p.audio.as_ref().unwrap();
        prop_assert_eq!(audio.fits.len(), n);
        prop_assert_eq!(audio.story.pairs.len(), n);
        prop_assert_eq!(serde_json::to_vec(&audio.story).unwrap(), serde_json::to_vec(&b.products.audio.unwrap().story).unwrap());
    }

    #[test]
    fn loops_stay_within_configured_budgets(
        seed in any::<u64>(),
        budgets in (1u32..5, 1u32..5, 1u32..5, 1u32..4, 1u32..3, 1u32..6),
    ) {
        let mut cfg = mock_config(seed, DefectModel::default().scenario(seed, 3));
        let b = &mut cfg.config.pipeline.budgets;
        (b.script, b.shot, b.voice, b.t2i, b.i2v, b.subtitle) = budgets;
        let limits = cfg.config.pipeline.budgets;
        let prompt = UserPrompt::new("a keeper and a storm", 3, 5.0).unwrap();
        let run = run_in_memory(&cfg, &prompt).unwrap();
        for l in &run.report.loops {
            let cap = match loop_kind(l) {
                "script" => limits.script,
                "shot" => limits.shot,
                "voice" => limits.voice,
                "t2i" => limits.t2i,
                "i2v" => limits.i2v,
                "subtitle" => limits.subtitle,
                other => panic!("unknown loop kind {other}"),
            };
            prop_assert!(l.iterations <= cap && l.max_iterations == cap, "{}: {} of {}", l.loop_id, l.iterations, cap);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn strict_fits_never_overrun(words in 0usize..60, clip in 0.2f64..12.0, wpm in 90f64..220.0) {
        let mut cfg = mock_config(1, MockScenario::default());
        cfg.config.pipeline.policy = ExhaustionPolicy::Fail;
        cfg.config.pipeline.words_per_minute = wpm;
        let ctx = build_context(&cfg, None).unwrap();
        let subtitle: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
        let shot = Shot::new(1, "pier", "waves").with_subtitle(subtitle.join(" "));
        match fit_subtitle(&ctx, &shot, None, clip) {
            Ok(f) => {
                prop_assert!(f.fits);
                prop_assert!(f.audio_seconds <= clip + cfg.config.pipeline.slack_seconds + 1e-9);
                prop_assert!(f.attempts <= cfg.config.pipeline.budgets.subtitle);
            }
            Err(StageError::FitFailure { .. }) => prop_assert!(false, "an empty subtitle always fits"),
            Err(e) => prop_assert!(false, "unexpected {e}"),
        }
    }
}

#[test]
fn every_call_is_journaled_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = mock_config(4, DefectModel::default().scenario(4, 3));
    let prompt = UserPrompt::new("a keeper and a storm", 3, 5.0).unwrap();
    reelwright::orchestrator::run_pipeline(&cfg, &prompt, dir.path(), &Default::default()).unwrap();
    let records = reelwright::providers::CallLog::read(dir.path().join("calls.log")).unwrap();
    assert!(!records.is_empty());
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        assert!(seen.insert((r.provider.clone(), r.key.clone())), "duplicate call {} {}", r.provider, r.key);
        assert!(r.request_digest.len() == 64 && r.response_digest.len() == 64, "{r:?}");
        if i > 0 {
            assert!(r.id > records[i - 1].id, "call ids must increase");
        }
    }
}
