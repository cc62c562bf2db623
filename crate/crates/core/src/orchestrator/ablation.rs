use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use super::metrics::{compliance_rate, family, family_results};
use super::{build_context, products, ResolvedConfig, RunError};
use crate::guidelines::axes;
use crate::providers::mock::{MockScenario, ScenarioEntry, OVERSIZED_SUBTITLE};
use crate::schema::UserPrompt;
use crate::seed::derive_seed;
use crate::stages::{Agent, StageId};

/// Per-trial probabilities of injecting each defect family into the first
/// draft. Later iterations are clean, so an enabled reviewer or refiner can
/// always repair within budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectModel {
    pub structure: f64,
    pub content: f64,
    pub style: f64,
    pub shot_element_omission: f64,
    pub voice_plan: f64,
    /// Applied to every script draft: the script guides do not look at
    /// subtitle length, only the subtitle refiner can fix it.
    pub oversized_subtitle: f64,
    pub image_naturalness: f64,
    pub video_naturalness: f64,
    /// Naturalness score given to defective candidates.
    pub defect_score: f64,
}

impl Default for DefectModel {
    fn default() -> Self {
        Self {
            structure: 0.0,
            content: 0.0,
            style: 0.0,
            shot_element_omission: 0.15,
            voice_plan: 0.08,
            oversized_subtitle: 0.40,
            image_naturalness: 0.25,
            video_naturalness: 0.0,
            defect_score: 0.4,
        }
    }
}

impl DefectModel {
    pub fn none() -> Self {
        Self {
            shot_element_omission: 0.0,
            voice_plan: 0.0,
            oversized_subtitle: 0.0,
            image_naturalness: 0.0,
            ..Self::default()
        }
    }

    /// Scenario for one trial; the same `(seed, shots)` always gives the same scenario.
    pub fn scenario(&self, seed: u64, shots: u32) -> MockScenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = MockScenario::default();
        let shot = |rng: &mut ChaCha8Rng| rng.gen_range(1..=shots.max(1));
        // Every roll happens regardless of outcome so families stay independent.
        let rolls: Vec<bool> = [
            self.structure,
            self.content,
            self.style,
            self.shot_element_omission,
            self.voice_plan,
            self.oversized_subtitle,
            self.image_naturalness,
            self.video_naturalness,
        ]
        .iter()
        .map(|p| rng.gen_bool(p.clamp(0.0, 1.0)))
        .collect();
        let targets: Vec<u32> = (0..8).map(|_| shot(&mut rng)).collect();
        let coin = rng.gen_bool(0.5);

        if rolls[0] {
            let d = if shots >= 2 { "STR-1" } else { "STY-1" };
            s = s.with_entry(ScenarioEntry::new("script/generator/1/0").defect(d, Some(targets[0].max(2))));
        }
        if rolls[1] {
            s = s.with_entry(ScenarioEntry::new("script/generator/1/0").defect("CON-1", Some(targets[1])));
        }
        if rolls[2] {
            s = s.with_entry(ScenarioEntry::new("script/generator/1/0").defect("STY-1", None));
        }
        if rolls[3] {
            s = s.with_entry(ScenarioEntry::new("shots/generator/1/0").defect("SHOT-1", Some(targets[3])));
        }
        if rolls[4] {
            let d = if coin { "VOI-1" } else { "VOI-2" };
            s = s.with_entry(ScenarioEntry::new("audio#voice/generator/1/0").defect(d, Some(targets[4])));
        }
        if rolls[5] {
            s = s.with_entry(
                ScenarioEntry::new("script/generator/*/*").defect(OVERSIZED_SUBTITLE, Some(targets[5])),
            );
        }
        if rolls[6] {
            s = s.with_entry(
                ScenarioEntry::new(&format!("keyframes#{}/generator/1/*", targets[6]))
                    .score(axes::NATURALNESS, self.defect_score),
            );
        }
        if rolls[7] {
            s = s.with_entry(
                ScenarioEntry::new(&format!("animation#{}/generator/1/*", targets[7]))
                    .score(axes::NATURALNESS, self.defect_score),
            );
        }
        s
    }
}

/// Compliance family each toggle is responsible for.
pub fn family_of(agent: Agent) -> &'static str {
    match agent {
        Agent::StructureReviewer => family::STRUCTURE,
        Agent::ContentReviewer => family::CONTENT,
        Agent::StyleReviewer => family::STYLE,
        Agent::ShotReviewer => family::SHOT_DESIGN,
        Agent::VoiceReviewer => family::VOICE,
        Agent::SubtitleRefiner => family::AUDIO_FIT,
        Agent::T2i3e => family::IMAGE_NATURALNESS,
        Agent::I2v3e => family::VIDEO,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub disabled: Vec<Agent>,
    /// Share of trials in which every checked unit of the family passed.
    pub compliance: BTreeMap<String, f64>,
    pub failed_runs: usize,
}

/// Paired comparison of a single-toggle row against the all-enabled row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub toggle: Agent,
    pub family: String,
    /// Trials where only the enabled configuration passed.
    pub wins: usize,
    /// Trials where only the ablated configuration passed.
    pub losses: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub trials: usize,
    pub shots: u32,
    pub rows: Vec<AblationRow>,
    pub sign_tests: Vec<SignTest>,
}

impl AblationReport {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// One-sided exact sign test: probability of at least `wins` successes in
/// `wins + losses` fair coin flips.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = (wins + losses) as u64;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    b.sf(wins as u64 - 1)
}

type TrialResult = Option<BTreeMap<&'static str, bool>>;

fn trial(
    base: &ResolvedConfig,
    prompt: &UserPrompt,
    disabled: &BTreeSet<Agent>,
    model: &DefectModel,
    t: usize,
) -> TrialResult {
    let seed = derive_seed(base.config.seed, &[t as u64]);
    let mut cfg = base.clone();
    cfg.config.seed = seed;
    cfg.config.pipeline.disabled = disabled.clone();
    cfg.scenario = Some(model.scenario(derive_seed(seed, &[0xdefec7]), prompt.target_shot_count));
    let ctx = build_context(&cfg, None).ok()?;
    let mut p = products::Products::default();
    for stage in StageId::ALL {
        products::run_stage(&ctx, prompt, stage, &mut p).ok()?;
    }
    Some(family_results(&p, &ctx).into_iter().map(|(k, v)| (k, v.iter().all(|x| *x))).collect())
}

fn run_row(
    base: &ResolvedConfig,
    prompt: &UserPrompt,
    disabled: &BTreeSet<Agent>,
    model: &DefectModel,
    trials: usize,
) -> Vec<TrialResult> {
    let width = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    let ids: Vec<usize> = (0..trials).collect();
    let mut out = Vec::with_capacity(trials);
    for chunk in ids.chunks(width.max(1) * 4) {
        let part: Vec<TrialResult> = std::thread::scope(|s| {
            let per = chunk.len().div_ceil(width.max(1));
            let handles: Vec<_> = chunk
                .chunks(per.max(1))
                .map(|sub| {
                    s.spawn(move || {
                        sub.iter().map(|&t| trial(base, prompt, disabled, model, t)).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("trial worker panicked")).collect()
        });
        out.extend(part);
    }
    out
}

fn summarize(label: String, disabled: &BTreeSet<Agent>, results: &[TrialResult]) -> AblationRow {
    let mut compliance = BTreeMap::new();
    for f in family::ALL {
        let passes: Vec<bool> = results.iter().flatten().filter_map(|r| r.get(f).copied()).collect();
        if let Ok(rate) = compliance_rate(&passes) {
            compliance.insert(f.to_string(), rate);
        }
    }
    AblationRow {
        label,
        disabled: disabled.iter().copied().collect(),
        compliance,
        failed_runs: results.iter().filter(|r| r.is_none()).count(),
    }
}

/// Runs `trials` seeded pipelines per row under `model`: one row with every
/// agent enabled, one per toggle, and one with all toggles off when more
/// than one is given. Trial `t` uses the same seed and defect draw in every
/// row, so rows can be compared pairwise.
pub fn run_ablation(
    base: &ResolvedConfig,
    prompt: &UserPrompt,
    toggles: &BTreeSet<Agent>,
    trials: usize,
    model: &DefectModel,
) -> Result<AblationReport, RunError> {
    if base.uses_http() || base.config.backend != crate::providers::Backend::Mock {
        return Err(RunError::Config("ablation runs need the mock backend".into()));
    }
    if trials == 0 {
        return Err(RunError::Config("ablation needs at least one trial".into()));
    }
    prompt.validate().map_err(|e| RunError::Config(format!("prompt: {e}")))?;

    let none = BTreeSet::new();
    let baseline = run_row(base, prompt, &none, model, trials);
    let mut rows = vec![summarize("all agents".into(), &none, &baseline)];
    let mut sign_tests = Vec::new();
    for &agent in toggles {
        let disabled: BTreeSet<Agent> = [agent].into();
        let results = run_row(base, prompt, &disabled, model, trials);
        let fam = family_of(agent);
        let (mut wins, mut losses) = (0, 0);
        for (a, b) in baseline.iter().zip(&results) {
            if let (Some(a), Some(b)) = (a, b) {
                match (a.get(fam), b.get(fam)) {
                    (Some(true), Some(false)) => wins += 1,
                    (Some(false), Some(true)) => losses += 1,
                    _ => {}
                }
            }
        }
        sign_tests.push(SignTest {
            toggle: agent,
            family: fam.to_string(),
            wins,
            losses,
            p_value: sign_test_p_value(wins, losses),
        });
        rows.push(summarize(format!("w/o {agent}"), &disabled, &results));
    }
    if toggles.len() > 1 {
        let results = run_row(base, prompt, toggles, model, trials);
        rows.push(summarize("w/o all listed".into(), toggles, &results));
    }
    Ok(AblationReport { trials, shots: prompt.target_shot_count, rows, sign_tests })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom_tail(wins: u64, n: u64) -> f64 {
        // Direct sum of C(n,k) / 2^n for k >= wins, via logs.
        let ln_fact = |m: u64| (1..=m).map(|i| (i as f64).ln()).sum::<f64>();
        (wins..=n).map(|k| (ln_fact(n) - ln_fact(k) - ln_fact(n - k) - n as f64 * 2f64.ln()).exp()).sum()
    }

    #[test]
    fn sign_test_matches_direct_sum() {
        for (w, l) in [(5, 0), (10, 3), (60, 40), (1, 1), (30, 0)] {
            let p = sign_test_p_value(w, l);
            assert!((p - binom_tail(w as u64, (w + l) as u64)).abs() < 1e-9, "{w} {l}");
        }
        assert_eq!(sign_test_p_value(0, 0), 1.0);
        assert!((sign_test_p_value(1, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scenario_is_a_function_of_seed() {
        let m = DefectModel::default();
        assert_eq!(m.scenario(9, 3), m.scenario(9, 3));
        assert!(DefectModel::none().scenario(9, 3).entries.is_empty());
    }

    #[test]
    fn defect_frequencies_follow_the_model() {
        let m = DefectModel { shot_element_omission: 1.0, ..DefectModel::none() };
        let s = m.scenario(1, 3);
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[0].defect.as_deref(), Some("SHOT-1"));
    }
}
