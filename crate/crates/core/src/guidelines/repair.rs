use thiserror::Error;

use super::{check_structure, Finding, RuleId};
use crate::schema::{Script, Shot};

/// The four kinds of transitional shot that break up a repeated location or character.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionTemplate {
    CloseUpOfOtherCharacter,
    PartialViewOfCharacter,
    EnvironmentDetail,
    ImportantProp,
}

const CYCLE: [TransitionTemplate; 4] = [
    TransitionTemplate::CloseUpOfOtherCharacter,
    TransitionTemplate::PartialViewOfCharacter,
    TransitionTemplate::EnvironmentDetail,
    TransitionTemplate::ImportantProp,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("only STR-1 and STR-3 findings can be repaired with a transitional shot, got {0}")]
    UnsupportedRule(RuleId),
    #[error("finding `{0}` is not reported by the structure check of this script")]
    UnknownFinding(String),
}

/// Builds a shot to insert between the two shots named by `finding`.
///
/// The inserted shot always gets a fresh location and never shares a
/// character with either neighbour, so the finding disappears and no new
/// STR-1/STR-2/STR-3 appears at the insertion point. The template is picked by
/// cycling through [`TransitionTemplate`] with the finding's position in the
/// structure report; STR-3 starts at the close-up, STR-1 at the environment detail.
pub fn suggest_transitional_shot(script: &Script, finding: &Finding) -> Result<Shot, RepairError> {
    let offset = match finding.rule_id {
        RuleId::Str3 => 0,
        RuleId::Str1 => 2,
        other => return Err(RepairError::UnsupportedRule(other)),
    };
    let report = check_structure(script);
    let position = report
        .iter()
        .position(|f| f == finding)
        .ok_or_else(|| RepairError::UnknownFinding(finding.to_string()))?;
    let next_index = finding.shot_index.expect("structure findings carry a shot index");
    let next = script.shot(next_index).expect("finding refers to an existing shot");
    let prev = script.shot(next_index - 1).expect("structure findings are never on the first shot");

    let outsider = script
        .characters
        .iter()
        .find(|c| !prev.character_ids.contains(&c.id) && !next.character_ids.contains(&c.id));
    let featured = next.character_ids.iter().chain(&prev.character_ids).find_map(|id| script.character(id));

    let template = (0..CYCLE.len())
        .map(|k| CYCLE[(offset + position + k) % CYCLE.len()])
        .find(|t| match t {
            TransitionTemplate::CloseUpOfOtherCharacter => outsider.is_some(),
            TransitionTemplate::PartialViewOfCharacter => featured.is_some(),
            _ => true,
        })
        .expect("environment detail is always applicable");

    let place = &next.location_id;
    let (suffix, content, cast) = match template {
        TransitionTemplate::CloseUpOfOtherCharacter => {
            let c = outsider.expect("checked above");
            ("closeup", format!("close-up of {} reacting", c.name), vec![c.id.clone()])
        }
        TransitionTemplate::PartialViewOfCharacter => {
            let c = featured.expect("checked above");
            ("partial", format!("partial view of {}: hands and back, face out of frame", c.name), Vec::new())
        }
        TransitionTemplate::EnvironmentDetail => {
            ("detail", format!("detail shot of the surroundings near {place}"), Vec::new())
        }
        TransitionTemplate::ImportantProp => {
            ("prop", format!("insert shot of an important prop near {place}"), Vec::new())
        }
    };

    let locations = script.locations();
    let mut location = format!("{place}~{suffix}");
    let mut n = 2;
    while locations.contains(location.as_str()) {
        location = format!("{place}~{suffix}-{n}");
        n += 1;
    }

    let mut shot = Shot::new(next_index, location, content).with_characters(cast);
    shot.silent = true;
    Ok(shot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::CharacterDef;

    fn def(id: &str) -> CharacterDef {
        CharacterDef { id: id.into(), name: id.to_uppercase(), appearance: "tall".into(), lora_ref: None }
    }

    #[test]
    fn env_detail_breaks_repeated_location() {
        let s = Script {
            title: "T".into(),
            characters: vec![],
            shots: vec![Shot::new(1, "L0", "a"), Shot::new(2, "L1", "b"), Shot::new(3, "L1", "c")],
            location_adjacency: Default::default(),
        };
        let finding = check_structure(&s).remove(0);
        assert_eq!((finding.rule_id, finding.shot_index), (RuleId::Str1, Some(3)));
        let shot = suggest_transitional_shot(&s, &finding).unwrap();
        assert!(shot.content.starts_with("detail shot"));
        assert_eq!(shot.index, 3);
        assert!(!s.locations().contains(shot.location_id.as_str()));
        let patched = s.with_inserted_shot(shot);
        assert_eq!(patched.shot_count(), 4);
        assert!(check_structure(&patched).is_empty());
        assert!(patched.validate().is_ok());
    }

    #[test]
    fn close_up_of_other_character_breaks_repeat() {
        let s = Script {
            title: "T".into(),
            characters: vec![def("x"), def("y")],
            shots: vec![
                Shot::new(1, "A", "a").with_characters(["x"]),
                Shot::new(2, "B", "b").with_characters(["x"]),
            ],
            location_adjacency: Default::default(),
        };
        let finding = check_structure(&s).remove(0);
        assert_eq!(finding.rule_id, RuleId::Str3);
        let shot = suggest_transitional_shot(&s, &finding).unwrap();
        assert_eq!(shot.character_ids, vec!["y".to_string()]);
        assert!(check_structure(&s.with_inserted_shot(shot)).is_empty());
    }

    #[test]
    fn falls_back_when_no_other_character_exists() {
        let s = Script {
            title: "T".into(),
            characters: vec![def("x")],
            shots: vec![
                Shot::new(1, "A", "a").with_characters(["x"]),
                Shot::new(2, "A", "b").with_characters(["x"]),
            ],
            location_adjacency: Default::default(),
        };
        let report = check_structure(&s);
        for f in &report {
            let shot = suggest_transitional_shot(&s, f).unwrap();
            assert!(shot.character_ids.is_empty());
            let after = check_structure(&s.with_inserted_shot(shot));
            assert!(after.len() < report.len());
        }
    }

    #[test]
    fn rejects_foreign_or_unsupported_findings() {
        let s = Script {
            title: "T".into(),
            characters: vec![],
            shots: vec![Shot::new(1, "A", "a"), Shot::new(2, "B", "b")],
            location_adjacency: Default::default(),
        };
        let bogus = Finding::at(RuleId::Str1, 2, "made up");
        assert!(matches!(suggest_transitional_shot(&s, &bogus), Err(RepairError::UnknownFinding(_))));
        let str2 = Finding::at(RuleId::Str2, 2, "x");
        assert_eq!(suggest_transitional_shot(&s, &str2), Err(RepairError::UnsupportedRule(RuleId::Str2)));
    }
}
