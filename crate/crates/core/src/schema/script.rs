//! Script documents and their canonical text form.
//!
//! Grammar (JSON, UTF-8, every object closed to unknown keys):
//!
//! ```text
//! document   := { "schema_version": 1,
//!                 "title": string,
//!                 "characters": [ character* ],
//!                 "location_adjacency": [ [loc, loc]* ],     // optional, default []
//!                 "shots": [ shot+ ] }
//! character  := { "id": token, "name": string, "appearance": string, "lora_ref"?: string }
//! shot       := { "index": 1.., "characters": [ id* ], "location": token,
//!                 "content": string, "action"?: string, "subtitle": string,
//!                 "continuity_required"?: bool, "silent"?: bool }
//! ```
//!
//! An empty `characters` list on a shot encodes "no character in frame".
//! Adjacency pairs are unordered; the canonical form stores each pair sorted
//! and the whole list sorted and deduplicated.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::canonical_json;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterDef {
    pub id: String,
    pub name: String,
    pub appearance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lora_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shot {
    pub index: u32,
    #[serde(rename = "characters")]
    pub character_ids: Vec<String>,
    #[serde(rename = "location")]
    pub location_id: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub subtitle: String,
    #[serde(default, skip_serializing_if = "is_false")]
    pub continuity_required: bool,
    /// Marks a shot that intentionally has no voice-over.
    #[serde(default, skip_serializing_if = "is_false")]
    pub silent: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Shot {
    pub fn new(index: u32, location: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            index,
            character_ids: Vec::new(),
            location_id: location.into(),
            content: content.into(),
            action: None,
            subtitle: String::new(),
            continuity_required: false,
            silent: false,
        }
    }

    pub fn with_characters<I, S>(mut self, ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.character_ids = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_action(mut self, action: impl Into<String>) -> Self {
        self.action = Some(action.into());
        self
    }

    pub fn with_subtitle(mut self, subtitle: impl Into<String>) -> Self {
        self.subtitle = subtitle.into();
        self
    }

    pub fn with_continuity(mut self, required: bool) -> Self {
        self.continuity_required = required;
        self
    }

    pub fn shares_character_with(&self, other: &Shot) -> bool {
        self.character_ids.iter().any(|c| other.character_ids.contains(c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScriptDocument", into = "ScriptDocument")]
pub struct Script {
    pub title: String,
    pub characters: Vec<CharacterDef>,
    pub shots: Vec<Shot>,
    /// Unordered pairs of "tightly connected" locations, each stored as `(min, max)`.
    pub location_adjacency: BTreeSet<(String, String)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptDocument {
    schema_version: u32,
    title: String,
    characters: Vec<CharacterDef>,
    #[serde(default)]
    location_adjacency: Vec<[String; 2]>,
    shots: Vec<Shot>,
}

impl TryFrom<ScriptDocument> for Script {
    type Error = String;

    fn try_from(doc: ScriptDocument) -> Result<Self, Self::Error> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            ));
        }
        let location_adjacency =
            doc.location_adjacency.into_iter().map(|[a, b]| ordered_pair(a, b)).collect();
        Ok(Script { title: doc.title, characters: doc.characters, shots: doc.shots, location_adjacency })
    }
}

impl From<Script> for ScriptDocument {
    fn from(s: Script) -> Self {
        ScriptDocument {
            schema_version: SCHEMA_VERSION,
            title: s.title,
            characters: s.characters,
            location_adjacency: s.location_adjacency.into_iter().map(|(a, b)| [a, b]).collect(),
            shots: s.shots,
        }
    }
}

/// Canonical key for an unordered location pair.
pub fn location_pair(a: &str, b: &str) -> (String, String) {
    ordered_pair(a.to_string(), b.to_string())
}

pub(crate) fn ordered_pair(a: String, b: String) -> (String, String) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("{0}")]
    Shape(String),
    #[error("script has no shots")]
    NoShots,
    #[error("title is empty")]
    EmptyTitle,
    #[error("character id `{0}` is defined twice")]
    DuplicateCharacter(String),
    #[error("character `{0}` has an empty appearance")]
    EmptyAppearance(String),
    #[error("shot {shot}: character `{character}` is not defined")]
    DanglingCharacter { shot: u32, character: String },
    #[error("shot indices are not contiguous: expected {expected}, found {found}")]
    NonContiguous { expected: u32, found: u32 },
    #[error("shot {shot}: content is empty")]
    EmptyContent { shot: u32 },
    #[error("shot {shot}: location is empty")]
    EmptyLocation { shot: u32 },
    #[error("adjacency pair references unknown location `{0}`")]
    UnknownAdjacentLocation(String),
    #[error("location `{0}` is declared adjacent to itself")]
    SelfAdjacency(String),
}

impl SchemaError {
    /// Violations the style checker reports as findings instead of rejecting the document.
    pub fn is_style_covered(&self, script: &Script) -> bool {
        match self {
            SchemaError::EmptyTitle | SchemaError::EmptyContent { .. } => true,
            SchemaError::DanglingCharacter { .. } => script.characters.is_empty(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(#[from] SchemaError),
}

impl Script {
    pub fn shot_count(&self) -> usize {
        self.shots.len()
    }

    pub fn character(&self, id: &str) -> Option<&CharacterDef> {
        self.characters.iter().find(|c| c.id == id)
    }

    pub fn shot(&self, index: u32) -> Option<&Shot> {
        self.shots.iter().find(|s| s.index == index)
    }

    pub fn are_adjacent(&self, a: &str, b: &str) -> bool {
        self.location_adjacency.contains(&ordered_pair(a.to_string(), b.to_string()))
    }

    pub fn locations(&self) -> BTreeSet<&str> {
        self.shots.iter().map(|s| s.location_id.as_str()).collect()
    }

    /// Every invariant violation, in document order.
    pub fn violations(&self) -> Vec<SchemaError> {
        let mut out = Vec::new();
        if self.title.trim().is_empty() {
            out.push(SchemaError::EmptyTitle);
        }
        if self.shots.is_empty() {
            out.push(SchemaError::NoShots);
        }
        let mut ids = HashSet::new();
        for c in &self.characters {
            if !ids.insert(c.id.as_str()) {
                out.push(SchemaError::DuplicateCharacter(c.id.clone()));
            }
            if c.appearance.trim().is_empty() {
                out.push(SchemaError::EmptyAppearance(c.id.clone()));
            }
        }
        for (pos, shot) in self.shots.iter().enumerate() {
            let expected = pos as u32 + 1;
            if shot.index != expected {
                out.push(SchemaError::NonContiguous { expected, found: shot.index });
            }
            for c in &shot.character_ids {
                if !ids.contains(c.as_str()) {
                    out.push(SchemaError::DanglingCharacter { shot: shot.index, character: c.clone() });
                }
            }
            if shot.location_id.trim().is_empty() {
                out.push(SchemaError::EmptyLocation { shot: shot.index });
            }
            if shot.content.trim().is_empty() {
                out.push(SchemaError::EmptyContent { shot: shot.index });
            }
        }
        let locations = self.locations();
        for (a, b) in &self.location_adjacency {
            if a == b {
                out.push(SchemaError::SelfAdjacency(a.clone()));
            }
            for loc in [a, b] {
                if !locations.contains(loc.as_str()) {
                    out.push(SchemaError::UnknownAdjacentLocation(loc.clone()));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        match self.violations().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Inserts `shot` at position `shot.index` and renumbers everything after it.
    pub fn with_inserted_shot(&self, shot: Shot) -> Script {
        let mut out = self.clone();
        let at = (shot.index.max(1) as usize - 1).min(out.shots.len());
        out.shots.insert(at, shot);
        for (pos, s) in out.shots.iter_mut().enumerate() {
            s.index = pos as u32 + 1;
        }
        out
    }
}

/// Parses the document shape without checking cross-field invariants.
pub fn parse_document(bytes: &[u8]) -> Result<Script, ParseError> {
    serde_json::from_slice::<Script>(bytes).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => {
                ParseError::Syntax { line: e.line(), column: e.column(), message: e.to_string() }
            }
            Category::Data => ParseError::Schema(SchemaError::Shape(e.to_string())),
        }
    })
}

/// Parses and fully validates a script document.
pub fn parse_script(bytes: &[u8]) -> Result<Script, ParseError> {
    let script = parse_document(bytes)?;
    script.validate()?;
    Ok(script)
}

pub fn serialize_script(script: &Script) -> Vec<u8> {
    canonical_json(script)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "title": "T",
        "characters": [{"id": "a", "name": "Ada", "appearance": "red coat"}],
        "shots": [{"index": 1, "characters": ["a"], "location": "pier",
                   "content": "Ada looks out to sea", "subtitle": "She waits."}]
    }"#;

    #[test]
    fn minimal_document_parses() {
        let s = parse_script(MINIMAL.as_bytes()).unwrap();
        assert_eq!(s.title, "T");
        assert_eq!(s.shot_count(), 1);
        assert_eq!(s.characters.len(), 1);
    }

    #[test]
    fn dangling_character_names_the_shot() {
        let doc = r#"{
            "schema_version": 1, "title": "T",
            "characters": [{"id": "a", "name": "Ada", "appearance": "red coat"}],
            "shots": [
              {"index": 1, "characters": ["a"], "location": "pier", "content": "c", "subtitle": ""},
              {"index": 2, "characters": ["x"], "location": "hill", "content": "c", "subtitle": ""}
            ]}"#;
        let err = parse_script(doc.as_bytes()).unwrap_err();
        assert_eq!(
            err,
            ParseError::Schema(SchemaError::DanglingCharacter { shot: 2, character: "x".into() })
        );
        assert!(err.to_string().contains("shot 2"));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_script(b"{\n  \"title\": }").unwrap_err();
        match err {
            ParseError::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_top_level_key_is_rejected() {
        let doc = MINIMAL.replacen("\"title\"", "\"genre\": \"noir\", \"title\"", 1);
        assert!(matches!(parse_script(doc.as_bytes()), Err(ParseError::Schema(SchemaError::Shape(_)))));
    }

    #[test]
    fn non_contiguous_indices_are_rejected() {
        let doc = MINIMAL.replace("\"index\": 1", "\"index\": 2");
        assert_eq!(
            parse_script(doc.as_bytes()).unwrap_err(),
            ParseError::Schema(SchemaError::NonContiguous { expected: 1, found: 2 })
        );
    }

    #[test]
    fn wrong_version_is_a_schema_error() {
        let doc = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(
            parse_script(doc.as_bytes()),
            Err(ParseError::Schema(SchemaError::Shape(m))) if m.contains("schema_version")
        ));
    }

    #[test]
    fn key_order_and_pair_order_do_not_change_bytes() {
        let a = r#"{"schema_version":1,"title":"T","characters":[],
            "location_adjacency":[["b","a"]],
            "shots":[{"index":1,"characters":[],"location":"a","content":"x","subtitle":""},
                     {"index":2,"characters":[],"location":"b","content":"y","subtitle":""}]}"#;
        let b = r#"{"shots":[{"subtitle":"","content":"x","location":"a","characters":[],"index":1},
                     {"location":"b","index":2,"characters":[],"subtitle":"","content":"y"}],
            "location_adjacency":[["a","b"],["b","a"]],
            "characters":[],"title":"T","schema_version":1}"#;
        let sa = parse_script(a.as_bytes()).unwrap();
        let sb = parse_script(b.as_bytes()).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(serialize_script(&sa), serialize_script(&sb));
    }

    #[test]
    fn canonical_form_round_trips_byte_identically() {
        let s = parse_script(MINIMAL.as_bytes()).unwrap();
        let bytes = serialize_script(&s);
        let again = parse_script(&bytes).unwrap();
        assert_eq!(again, s);
        assert_eq!(serialize_script(&again), bytes);
    }

    #[test]
    fn adjacency_must_reference_used_locations() {
        let doc = MINIMAL.replacen(
            "\"shots\"",
            "\"location_adjacency\": [[\"pier\", \"lighthouse\"]], \"shots\"",
            1,
        );
        assert_eq!(
            parse_script(doc.as_bytes()).unwrap_err(),
            ParseError::Schema(SchemaError::UnknownAdjacentLocation("lighthouse".into()))
        );
    }

    #[test]
    fn style_covered_violations_are_still_parseable_documents() {
        let doc = MINIMAL.replace("\"title\": \"T\"", "\"title\": \"\"");
        let s = parse_document(doc.as_bytes()).unwrap();
        let v = s.violations();
        assert_eq!(v, vec![SchemaError::EmptyTitle]);
        assert!(v[0].is_style_covered(&s));
    }
}
