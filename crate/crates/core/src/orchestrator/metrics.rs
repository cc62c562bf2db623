use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::products::{FitSummary, Products};
use crate::engine::Outcome;
use crate::guidelines::{
    axes, check_content_with, check_shot_design, check_structure, check_style, check_voice_plan,
};
use crate::stages::{LoopSummary, StageContext, StageId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("compliance rate of an empty result list is undefined")]
    EmptyInput,
}

/// `100 * passed / total`, rounded half-up to one decimal.
pub fn compliance_rate(results: &[bool]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let passed = results.iter().filter(|p| **p).count() as u64;
    Ok(rate_tenths(passed, results.len() as u64) as f64 / 10.0)
}

/// Tenths of a percent, half-up, in integer arithmetic.
fn rate_tenths(passed: u64, total: u64) -> u64 {
    (2000 * passed + total) / (2 * total)
}

/// Check families reported as compliance rates.
pub mod family {
    pub const STRUCTURE: &str = "structure";
    pub const CONTENT: &str = "content";
    pub const STYLE: &str = "style";
    pub const SHOT_DESIGN: &str = "shot_design";
    pub const VOICE: &str = "voice";
    pub const AUDIO_FIT: &str = "audio_fit";
    /// Every image axis of every final T2I selection at or above the threshold.
    pub const IMAGE: &str = "image";
    pub const IMAGE_NATURALNESS: &str = "image_naturalness";
    pub const VIDEO: &str = "video";

    pub const ALL: [&str; 9] =
        [STRUCTURE, CONTENT, STYLE, SHOT_DESIGN, VOICE, AUDIO_FIT, IMAGE, IMAGE_NATURALNESS, VIDEO];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    pub passed: usize,
    pub total: usize,
    pub rate: f64,
}

impl Compliance {
    pub fn from_results(results: &[bool]) -> Option<Self> {
        Some(Self {
            passed: results.iter().filter(|p| **p).count(),
            total: results.len(),
            rate: compliance_rate(results).ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub shots: usize,
    pub compliance: BTreeMap<String, Compliance>,
    /// Largest recorded iteration count per loop kind.
    pub max_iterations: BTreeMap<String, u32>,
    pub budget_exhausted: usize,
    pub residual_findings: usize,
    pub loops: Vec<LoopSummary>,
    /// Wall-clock seconds per stage; the only non-deterministic field.
    pub stage_seconds: BTreeMap<String, f64>,
}

/// Budget kind a loop counts against: script, shot, voice, t2i, i2v or subtitle.
pub fn loop_kind(s: &LoopSummary) -> &'static str {
    let item = s.item.as_deref().unwrap_or("");
    match s.stage {
        StageId::Script => "script",
        StageId::Shots => "shot",
        StageId::Audio if item == "voice" => "voice",
        StageId::Audio => "subtitle",
        StageId::Characters if item.ends_with(".turnaround") => "i2v",
        StageId::Characters | StageId::Keyframes => "t2i",
        StageId::Animation => "i2v",
    }
}

fn axes_pass(s: &LoopSummary, axes: &[&str], threshold: f64) -> bool {
    axes.iter().all(|a| s.final_scores.get(*a).is_some_and(|v| *v >= threshold))
}

/// Pass/fail results per family. Each family lists one entry per checked
/// unit (the script, each design, each shot's audio, each media loop).
pub fn family_results(products: &Products, ctx: &StageContext) -> BTreeMap<&'static str, Vec<bool>> {
    let settings = &ctx.settings;
    let mut out: BTreeMap<&'static str, Vec<bool>> = BTreeMap::new();
    if let Some(script) = &products.script {
        out.insert(family::STRUCTURE, vec![check_structure(script).is_empty()]);
        out.insert(family::CONTENT, vec![check_content_with(script, &ctx.content).is_empty()]);
        out.insert(family::STYLE, vec![check_style(script, script.shot_count()).is_empty()]);
    }
    if let Some(designs) = &products.designs {
        out.insert(family::SHOT_DESIGN, designs.iter().map(|d| check_shot_design(d).is_empty()).collect());
    }
    if let Some(audio) = &products.audio {
        let music: BTreeSet<String> = settings.music_catalog.iter().cloned().collect();
        let emotions: BTreeSet<String> = settings.emotions.iter().cloned().collect();
        out.insert(family::VOICE, vec![check_voice_plan(&audio.plan, &music, &emotions).is_empty()]);
        out.insert(
            family::AUDIO_FIT,
            audio
                .fits
                .iter()
                .map(|f: &FitSummary| f.audio_seconds <= f.clip_seconds + settings.slack_seconds)
                .collect(),
        );
    }
    let t = settings.approve_threshold;
    let image: Vec<&LoopSummary> = products.summaries.iter().filter(|s| loop_kind(s) == "t2i").collect();
    let video: Vec<&LoopSummary> = products.summaries.iter().filter(|s| loop_kind(s) == "i2v").collect();
    if !image.is_empty() {
        out.insert(family::IMAGE, image.iter().map(|s| axes_pass(s, &axes::IMAGE, t)).collect());
        out.insert(
            family::IMAGE_NATURALNESS,
            image
                .iter()
                .filter(|s| s.stage == StageId::Keyframes)
                .map(|s| axes_pass(s, &[axes::NATURALNESS], t))
                .collect(),
        );
    }
    if !video.is_empty() {
        out.insert(family::VIDEO, video.iter().map(|s| axes_pass(s, &axes::VIDEO, t)).collect());
    }
    out.retain(|_, v| !v.is_empty());
    out
}

pub fn build_report(
    run_id: &str,
    products: &Products,
    ctx: &StageContext,
    stage_seconds: BTreeMap<String, f64>,
) -> MetricsReport {
    let compliance = family_results(products, ctx)
        .into_iter()
        .filter_map(|(k, v)| Some((k.to_string(), Compliance::from_results(&v)?)))
        .collect();
    let mut max_iterations: BTreeMap<String, u32> = BTreeMap::new();
    for s in &products.summaries {
        let e = max_iterations.entry(loop_kind(s).to_string()).or_default();
        *e = (*e).max(s.iterations);
    }
    MetricsReport {
        run_id: run_id.to_string(),
        shots: products.script.as_ref().map_or(0, |s| s.shot_count()),
        compliance,
        max_iterations,
        budget_exhausted: products.summaries.iter().filter(|s| s.outcome == Outcome::BudgetExhausted).count(),
        residual_findings: products.summaries.iter().map(|s| s.residual_findings).sum(),
        loops: products.summaries.clone(),
        stage_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(compliance_rate(&[true, true, false, true]), Ok(75.0));
        assert_eq!(compliance_rate(&[true; 7]), Ok(100.0));
        let mut v = vec![true; 113];
        v.extend(vec![false; 87]);
        assert_eq!(compliance_rate(&v), Ok(56.5));
        assert_eq!(compliance_rate(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn rounding_is_half_up() {
        // 1/8 = 12.5 exactly; 1/16 = 6.25 -> 6.3; 1/3 = 33.33 -> 33.3; 2/3 -> 66.7
        assert_eq!(rate_tenths(1, 8), 125);
        assert_eq!(rate_tenths(1, 16), 63);
        assert_eq!(rate_tenths(1, 3), 333);
        assert_eq!(rate_tenths(2, 3), 667);
        assert_eq!(rate_tenths(0, 5), 0);
    }

    #[test]
    fn rate_is_bounded() {
        for total in 1..60u64 {
            for passed in 0..=total {
                let r = rate_tenths(passed, total);
                assert!(r <= 1000);
                let exact = passed as f64 * 1000.0 / total as f64;
                assert!((r as f64 - exact).abs() <= 0.5 + 1e-9);
            }
        }
    }
}
