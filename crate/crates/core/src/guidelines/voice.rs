use std::collections::BTreeSet;

use super::{canonical_order, Finding, RuleId};
use crate::schema::VoicePlan;

pub fn check_voice_plan(
    plan: &VoicePlan,
    music_catalog: &BTreeSet<String>,
    emotion_vocab: &BTreeSet<String>,
) -> Vec<Finding> {
    let mut out = Vec::new();
    if !music_catalog.contains(&plan.background_music_id) {
        out.push(Finding::new(
            RuleId::Voi1,
            None,
            format!("background music `{}` is not in the catalog", plan.background_music_id),
        ));
    }
    for line in &plan.per_shot {
        if !emotion_vocab.contains(&line.emotion) {
            out.push(Finding::at(
                RuleId::Voi2,
                line.shot_index,
                format!("emotion `{}` is not in the vocabulary", line.emotion),
            ));
        }
    }
    canonical_order(&mut out);
    out
}
