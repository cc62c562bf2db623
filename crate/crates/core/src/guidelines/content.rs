use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{canonical_order, Finding, RuleId};
use crate::schema::Script;

/// Tunable marker and phrase lists for the content guide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContentRules {
    /// Conjunction markers that indicate a second action in the `action` field.
    /// Alphanumeric markers match whole words; anything else matches as a substring.
    pub action_markers: Vec<String>,
    /// Case-insensitive regular expressions for fine details models render poorly.
    pub detail_patterns: Vec<String>,
}

impl Default for ContentRules {
    fn default() -> Self {
        Self {
            action_markers: ["then", "followed by", ";", " and then "].map(String::from).to_vec(),
            detail_patterns: [
                r"\b(phone|smartphone|laptop|computer|tablet|tv|monitor|television)\s+screens?\b",
                r"\bscreens?\s+(shows?|displays?|reads?|says)\b",
                r"\b(text|message|words|writing|lettering|caption)\s+(on|reads|says)\b",
                r"\b(inscriptions?|engravings?|fine print)\b",
                r"\b(small|tiny|intricate|fine)\s+(patterns?|prints?|lettering|text|details?)\b",
                r"\b(sign|label|note|letter)\s+(reads|says)\b",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl ContentRules {
    /// Compiles the patterns; the default rules are compiled once per process.
    pub fn compile(&self) -> Result<ContentChecker, regex::Error> {
        if *self == ContentRules::default() {
            return Ok(default_checker().clone());
        }
        self.compile_uncached()
    }

    fn compile_uncached(&self) -> Result<ContentChecker, regex::Error> {
        let markers = self
            .action_markers
            .iter()
            .map(|m| {
                let lower = m.to_lowercase();
                let wordlike = lower.chars().next().is_some_and(|c| c.is_alphanumeric())
                    && lower.chars().last().is_some_and(|c| c.is_alphanumeric());
                let pattern =
                    if wordlike { format!(r"\b{}\b", regex::escape(&lower)) } else { regex::escape(&lower) };
                Regex::new(&pattern).map(|re| (m.clone(), re))
            })
            .collect::<Result<_, _>>()?;
        let details =
            self.detail_patterns.iter().map(|p| Regex::new(&format!("(?i){p}"))).collect::<Result<_, _>>()?;
        Ok(ContentChecker { markers, details })
    }
}

#[derive(Debug, Clone)]
pub struct ContentChecker {
    markers: Vec<(String, Regex)>,
    details: Vec<Regex>,
}

fn default_checker() -> &'static ContentChecker {
    static CHECKER: OnceLock<ContentChecker> = OnceLock::new();
    CHECKER.get_or_init(|| {
        ContentRules::default().compile_uncached().expect("default content patterns are valid")
    })
}

/// Content guide with the default marker and phrase lists.
pub fn check_content(script: &Script) -> Vec<Finding> {
    check_content_with(script, default_checker())
}

/// CON-1 when a shot's `action` carries a sequencing marker; CON-2 when its
/// content asks for fine detail such as on-screen text.
pub fn check_content_with(script: &Script, checker: &ContentChecker) -> Vec<Finding> {
    let mut out = Vec::new();
    for shot in &script.shots {
        if let Some(action) = &shot.action {
            let lower = action.to_lowercase();
            if let Some((marker, _)) = checker.markers.iter().find(|(_, re)| re.is_match(&lower)) {
                out.push(Finding::at(
                    RuleId::Con1,
                    shot.index,
                    format!("action `{action}` chains several actions (marker `{}`)", marker.trim()),
                ));
            }
        }
        if let Some(m) = checker.details.iter().find_map(|re| re.find(&shot.content)) {
            out.push(Finding::at(
                RuleId::Con2,
                shot.index,
                format!("content asks for fine detail: `{}`", m.as_str()),
            ));
        }
    }
    canonical_order(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Shot;

    fn one_shot(shot: Shot) -> Script {
        Script {
            title: "T".into(),
            characters: vec![],
            shots: vec![shot],
            location_adjacency: Default::default(),
        }
    }

    #[test]
    fn single_action_is_clean() {
        let s = one_shot(Shot::new(1, "room", "she crosses the room").with_action("walks to the window"));
        assert!(check_content(&s).is_empty());
    }

    #[test]
    fn chained_actions_are_flagged() {
        let s = one_shot(Shot::new(1, "park", "he moves").with_action("runs, then walks, then dances"));
        let f = check_content(&s);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule_id, RuleId::Con1);
    }

    #[test]
    fn marker_words_match_whole_words_only() {
        let s = one_shot(Shot::new(1, "gym", "c").with_action("strengthens her grip"));
        assert!(check_content(&s).is_empty());
        let s = one_shot(Shot::new(1, "gym", "c").with_action("lifts; drops"));
        assert_eq!(check_content(&s)[0].rule_id, RuleId::Con1);
    }

    #[test]
    fn on_screen_text_is_flagged() {
        let s = one_shot(Shot::new(1, "cafe", "the phone screen shows the message 'call me'"));
        let f = check_content(&s);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule_id, RuleId::Con2);
    }

    #[test]
    fn custom_lists_replace_defaults() {
        let rules = ContentRules { action_markers: vec!["while".into()], detail_patterns: vec![] };
        let c = rules.compile().unwrap();
        let s =
            one_shot(Shot::new(1, "cafe", "the phone screen shows text").with_action("sips while reading"));
        let f = check_content_with(&s, &c);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule_id, RuleId::Con1);
    }
}
