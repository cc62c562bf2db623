use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SchemaError;
use crate::guidelines::{axes, Finding, RuleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Approve,
    Revise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleParam {
    pub rule: RuleId,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

/// The guideline set `g` a loop is run against: rule ids for rule-backed
/// reviewers and evaluation axes for scoring evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineSet {
    pub id: String,
    #[serde(default)]
    pub rules: Vec<RuleParam>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub axes: Vec<String>,
}

impl GuidelineSet {
    pub fn from_rules(id: impl Into<String>, rules: &[RuleId]) -> Self {
        Self {
            id: id.into(),
            rules: rules.iter().map(|r| RuleParam { rule: *r, params: BTreeMap::new() }).collect(),
            axes: Vec::new(),
        }
    }

    pub fn from_axes(id: impl Into<String>, axes: &[&str]) -> Self {
        Self { id: id.into(), rules: Vec::new(), axes: axes.iter().map(|a| a.to_string()).collect() }
    }

    pub fn structure() -> Self {
        Self::from_rules("structure", &[RuleId::Str1, RuleId::Str2, RuleId::Str3])
    }

    pub fn content() -> Self {
        Self::from_rules("content", &[RuleId::Con1, RuleId::Con2])
    }

    pub fn style() -> Self {
        Self::from_rules("style", &[RuleId::Sty1, RuleId::Sty2, RuleId::Sty3, RuleId::Sty4])
    }

    /// `g_scr = [g_str, g_con, g_sty]`.
    pub fn script() -> Self {
        let mut rules = Self::structure().rules;
        rules.extend(Self::content().rules);
        rules.extend(Self::style().rules);
        Self { id: "script".into(), rules, axes: Vec::new() }
    }

    pub fn shot_design() -> Self {
        Self::from_rules("shot-design", &[RuleId::Shot1])
    }

    pub fn voice() -> Self {
        Self::from_rules("voice", &[RuleId::Voi1, RuleId::Voi2])
    }

    pub fn image() -> Self {
        Self::from_axes("image-evaluation", &axes::IMAGE)
    }

    pub fn video() -> Self {
        Self::from_axes("video-evaluation", &axes::VIDEO)
    }

    pub fn has_rule(&self, rule: RuleId) -> bool {
        self.rules.iter().any(|r| r.rule == rule)
    }
}

/// Examination feedback `f_i` from one reviewer or evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub reviewer_id: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
}

impl Feedback {
    pub fn approve(reviewer: impl Into<String>) -> Self {
        Self {
            reviewer_id: reviewer.into(),
            verdict: Verdict::Approve,
            findings: Vec::new(),
            scores: BTreeMap::new(),
        }
    }

    pub fn revise(reviewer: impl Into<String>, findings: Vec<Finding>) -> Self {
        Self { reviewer_id: reviewer.into(), verdict: Verdict::Revise, findings, scores: BTreeMap::new() }
    }

    /// Approve iff `findings` is empty.
    pub fn from_findings(reviewer: impl Into<String>, findings: Vec<Finding>) -> Self {
        if findings.is_empty() {
            Self::approve(reviewer)
        } else {
            Self::revise(reviewer, findings)
        }
    }

    pub fn with_scores(mut self, scores: BTreeMap<String, f64>) -> Self {
        self.scores = scores;
        self
    }

    pub fn is_approved(&self) -> bool {
        self.verdict == Verdict::Approve
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.is_approved() && !self.findings.is_empty() {
            return Err(SchemaError::Shape(format!(
                "reviewer `{}` approved with {} findings",
                self.reviewer_id,
                self.findings.len()
            )));
        }
        for (axis, score) in &self.scores {
            if !axes::VIDEO.contains(&axis.as_str()) {
                return Err(SchemaError::Shape(format!("unknown evaluation axis `{axis}`")));
            }
            if !(0.0..=1.0).contains(score) {
                return Err(SchemaError::Shape(format!("score {score} for `{axis}` is outside [0, 1]")));
            }
        }
        Ok(())
    }
}
