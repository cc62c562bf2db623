use super::{canonical_order, Finding, RuleId};
use crate::schema::{Script, Shot};

/// Semantic subtitle/content alignment, which no mechanical rule can decide.
/// Implemented by a text provider in live mode.
pub trait SubtitleAligner {
    fn is_aligned(&self, shot: &Shot) -> Result<bool, String>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyleNotice(pub String);

/// Style guide without a semantic aligner; STY-4 is skipped.
pub fn check_style(script: &Script, n_expected: usize) -> Vec<Finding> {
    check_style_with(script, n_expected, None).0
}

/// STY-1 empty title; STY-2 no character definitions although a shot names
/// one; STY-3 missing shot content, unflagged empty subtitle, or a shot count
/// other than `n_expected`; STY-4 only when an aligner is supplied.
pub fn check_style_with(
    script: &Script,
    n_expected: usize,
    aligner: Option<&dyn SubtitleAligner>,
) -> (Vec<Finding>, Vec<StyleNotice>) {
    let mut out = Vec::new();
    let mut notices = Vec::new();
    if script.title.trim().is_empty() {
        out.push(Finding::new(RuleId::Sty1, None, "title is empty"));
    }
    if script.characters.is_empty() && script.shots.iter().any(|s| !s.character_ids.is_empty()) {
        out.push(Finding::new(
            RuleId::Sty2,
            None,
            "shots name characters but no character definitions are given",
        ));
    }
    if script.shots.len() != n_expected {
        out.push(Finding::new(
            RuleId::Sty3,
            None,
            format!("expected {n_expected} shots, found {}", script.shots.len()),
        ));
    }
    for shot in &script.shots {
        if shot.content.trim().is_empty() {
            out.push(Finding::at(RuleId::Sty3, shot.index, "shot content is missing"));
        }
        if shot.subtitle.trim().is_empty() && !shot.silent {
            out.push(Finding::at(
                RuleId::Sty3,
                shot.index,
                "subtitle is missing and the shot is not marked silent",
            ));
        }
    }
    match aligner {
        Some(a) => {
            for shot in script.shots.iter().filter(|s| !s.subtitle.trim().is_empty()) {
                match a.is_aligned(shot) {
                    Ok(true) => {}
                    Ok(false) => out.push(Finding::at(
                        RuleId::Sty4,
                        shot.index,
                        "subtitle does not align with the shot content",
                    )),
                    Err(e) => {
                        notices.push(StyleNotice(format!("STY-4 skipped for shot {}: {e}", shot.index)))
                    }
                }
            }
        }
        None => notices.push(StyleNotice("STY-4 skipped: no subtitle alignment provider configured".into())),
    }
    canonical_order(&mut out);
    (out, notices)
}
