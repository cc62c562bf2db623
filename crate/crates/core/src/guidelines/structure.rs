use super::{canonical_order, Finding, RuleId};
use crate::schema::Script;

/// Structure guide: flags each consecutive shot pair that repeats a location
/// (STR-1), jumps between declared adjacent locations (STR-2), or repeats a
/// character without a continuity flag on the later shot (STR-3). Findings
/// are attributed to the later shot of the pair.
pub fn check_structure(script: &Script) -> Vec<Finding> {
    let mut out = Vec::new();
    for pair in script.shots.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if prev.location_id == next.location_id {
            out.push(Finding::at(
                RuleId::Str1,
                next.index,
                format!("shots {} and {} share location `{}`", prev.index, next.index, next.location_id),
            ));
        } else if script.are_adjacent(&prev.location_id, &next.location_id) {
            out.push(Finding::at(
                RuleId::Str2,
                next.index,
                format!(
                    "shots {} and {} jump between tightly connected locations `{}` and `{}`",
                    prev.index, next.index, prev.location_id, next.location_id
                ),
            ));
        }
        if !next.continuity_required {
            let shared: Vec<&str> = next
                .character_ids
                .iter()
                .filter(|c| prev.character_ids.contains(c))
                .map(String::as_str)
                .collect();
            if !shared.is_empty() {
                out.push(Finding::at(
                    RuleId::Str3,
                    next.index,
                    format!("shots {} and {} both feature {}", prev.index, next.index, shared.join(", ")),
                ));
            }
        }
    }
    canonical_order(&mut out);
    out
}
