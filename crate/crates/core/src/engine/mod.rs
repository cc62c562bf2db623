//! Explore / Examine / Enhance refinement loops.
//!
//! [`run_loop`] drives one generator against a panel of examiners until every
//! examiner approves or the iteration budget runs out, rewriting the request
//! with a refiner between rounds. [`run_pooled_loop`] fans each request out to
//! an ordered pool of generators, scores the candidates, keeps the best one and
//! refines the request from its evaluation.
//!
//! Both loops record every prompt, candidate and piece of feedback in a
//! [`LoopTrace`], which serializes deterministically.

mod pooled;
mod score;
mod single;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidelines::Finding;
use crate::providers::ProviderError;
use crate::schema::{Feedback, GuidelineSet, PromptSpec};
use crate::seed::derive_seed;

pub use pooled::run_pooled_loop;
pub use score::{aggregate_scores, aggregate_weighted, ScoreError};
pub use single::run_loop;

/// Coordinates of one provider call inside a loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Turn {
    pub iteration: u32,
    pub candidate: u32,
    pub seed: u64,
}

impl Turn {
    pub(crate) fn new(loop_seed: u64, iteration: u32, candidate: u32) -> Self {
        Self { iteration, candidate, seed: derive_seed(loop_seed, &[iteration as u64, candidate as u64]) }
    }
}

/// Explore: produce an artifact from the current request.
pub trait Generate<A>: Send + Sync {
    fn generate(&self, prompt: &PromptSpec, turn: &Turn) -> Result<A, ProviderError>;

    /// Identifier recorded alongside the candidate in traces.
    fn provider_id(&self) -> Option<&str> {
        None
    }
}

/// Examine: judge one artifact against the guidelines.
pub trait Examine<A>: Send + Sync {
    fn reviewer_id(&self) -> &str;
    fn examine(
        &self,
        artifact: &A,
        guidelines: &GuidelineSet,
        turn: &Turn,
    ) -> Result<Feedback, ProviderError>;
}

/// Enhance: rewrite the request from the feedback on the last artifact.
pub trait Refine<A>: Send + Sync {
    fn refine(
        &self,
        prompt: &PromptSpec,
        artifact: &A,
        feedback: &[Feedback],
        guidelines: &GuidelineSet,
        turn: &Turn,
    ) -> Result<PromptSpec, ProviderError>;
}

/// Scores a pool's surviving candidates; returns one feedback per candidate,
/// in the order given, each carrying a score for every guideline axis.
pub trait Evaluate<A>: Send + Sync {
    fn evaluate(
        &self,
        candidates: &[(usize, &A)],
        guidelines: &GuidelineSet,
        turn: &Turn,
    ) -> Result<Vec<Feedback>, ProviderError>;
}

pub struct FnGenerator<F>(pub F);

impl<A, F> Generate<A> for FnGenerator<F>
where
    F: Fn(&PromptSpec, &Turn) -> Result<A, ProviderError> + Send + Sync,
{
    fn generate(&self, prompt: &PromptSpec, turn: &Turn) -> Result<A, ProviderError> {
        (self.0)(prompt, turn)
    }
}

pub struct FnExaminer<F> {
    pub id: String,
    pub f: F,
}

impl<F> FnExaminer<F> {
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<A, F> Examine<A> for FnExaminer<F>
where
    F: Fn(&A, &GuidelineSet, &Turn) -> Result<Feedback, ProviderError> + Send + Sync,
{
    fn reviewer_id(&self) -> &str {
        &self.id
    }

    fn examine(&self, artifact: &A, g: &GuidelineSet, turn: &Turn) -> Result<Feedback, ProviderError> {
        (self.f)(artifact, g, turn)
    }
}

pub struct FnRefiner<F>(pub F);

impl<A, F> Refine<A> for FnRefiner<F>
where
    F: Fn(&PromptSpec, &A, &[Feedback], &Turn) -> Result<PromptSpec, ProviderError> + Send + Sync,
{
    fn refine(
        &self,
        prompt: &PromptSpec,
        artifact: &A,
        feedback: &[Feedback],
        _: &GuidelineSet,
        turn: &Turn,
    ) -> Result<PromptSpec, ProviderError> {
        (self.0)(prompt, artifact, feedback, turn)
    }
}

pub struct FnEvaluator<F>(pub F);

impl<A, F> Evaluate<A> for FnEvaluator<F>
where
    F: Fn(&[(usize, &A)], &Turn) -> Result<Vec<Feedback>, ProviderError> + Send + Sync,
{
    fn evaluate(
        &self,
        candidates: &[(usize, &A)],
        _: &GuidelineSet,
        turn: &Turn,
    ) -> Result<Vec<Feedback>, ProviderError> {
        (self.0)(candidates, turn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExhaustionPolicy {
    #[default]
    EmitBestSoFar,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Consensus {
    #[default]
    AllApprove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub loop_id: String,
    /// Iteration budget `n`.
    pub max_iterations: u32,
    pub consensus: Consensus,
    pub guideline_set: GuidelineSet,
    pub on_budget_exhausted: ExhaustionPolicy,
    pub seed: u64,
    /// Axes averaged into a single-candidate loop's aggregate score. When
    /// empty, the aggregate is `1 / (1 + total findings)`.
    pub score_axes: Vec<String>,
    /// Per-axis weights; missing axes weigh 1.
    pub axis_weights: BTreeMap<String, f64>,
    /// A pooled candidate with every axis at or above this score ends the loop early.
    pub approve_threshold: f64,
    /// Run the pool members of one iteration on separate threads.
    pub parallel_fan_out: bool,
}

impl LoopConfig {
    pub fn new(loop_id: impl Into<String>, max_iterations: u32, guideline_set: GuidelineSet) -> Self {
        Self {
            loop_id: loop_id.into(),
            max_iterations,
            consensus: Consensus::AllApprove,
            guideline_set,
            on_budget_exhausted: ExhaustionPolicy::EmitBestSoFar,
            seed: 0,
            score_axes: Vec::new(),
            axis_weights: BTreeMap::new(),
            approve_threshold: 0.9,
            parallel_fan_out: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_policy(mut self, policy: ExhaustionPolicy) -> Self {
        self.on_budget_exhausted = policy;
        self
    }

    pub fn with_score_axes(mut self, axes: &[&str]) -> Self {
        self.score_axes = axes.iter().map(|a| a.to_string()).collect();
        self
    }

    pub(crate) fn check(&self) -> Result<(), EngineError> {
        if self.max_iterations == 0 {
            return Err(EngineError::Config(format!(
                "loop `{}`: max_iterations must be at least 1",
                self.loop_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CandidateSlot<A> {
    Produced {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        provider: Option<String>,
        artifact: A,
    },
    Skipped {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        provider: Option<String>,
        error: String,
    },
}

impl<A> CandidateSlot<A> {
    pub fn artifact(&self) -> Option<&A> {
        match self {
            CandidateSlot::Produced { artifact, .. } => Some(artifact),
            CandidateSlot::Skipped { .. } => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, CandidateSlot::Skipped { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<A> {
    pub iteration: u32,
    pub prompt: PromptSpec,
    pub candidates: Vec<CandidateSlot<A>>,
    pub feedback: Vec<Feedback>,
    /// Pool positions the entries of `feedback` belong to (pooled loops only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scored_candidates: Vec<usize>,
    pub selected_index: usize,
    pub aggregate_score: f64,
}

impl<A> IterationRecord<A> {
    pub fn all_approved(&self) -> bool {
        self.feedback.iter().all(Feedback::is_approved)
    }

    pub fn selected(&self) -> Option<&A> {
        self.candidates.get(self.selected_index).and_then(CandidateSlot::artifact)
    }

    pub fn skipped_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.is_skipped()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Consensus,
    BudgetExhausted,
    /// Explore-only run with every reviewer disabled.
    Unreviewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace<A> {
    pub loop_id: String,
    pub max_iterations: u32,
    pub records: Vec<IterationRecord<A>>,
    pub outcome: Outcome,
    /// Iteration the final artifact came from.
    pub final_iteration: u32,
    #[serde(rename = "final")]
    pub final_artifact: A,
    pub refiner_calls: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl<A> LoopTrace<A> {
    pub fn iterations(&self) -> u32 {
        self.records.len() as u32
    }

    /// Findings of the last examined iteration.
    pub fn residual_findings(&self) -> Vec<Finding> {
        self.records
            .last()
            .map(|r| r.feedback.iter().flat_map(|f| f.findings.iter().cloned()).collect())
            .unwrap_or_default()
    }

    /// Trace of a loop whose reviewers are all disabled: one explore, no examination.
    pub fn unreviewed(loop_id: impl Into<String>, prompt: PromptSpec, artifact: A) -> Self
    where
        A: Clone,
    {
        Self {
            loop_id: loop_id.into(),
            max_iterations: 1,
            records: vec![IterationRecord {
                iteration: 1,
                prompt,
                candidates: vec![CandidateSlot::Produced { provider: None, artifact: artifact.clone() }],
                feedback: Vec::new(),
                scored_candidates: Vec::new(),
                selected_index: 0,
                aggregate_score: 0.0,
            }],
            outcome: Outcome::Unreviewed,
            final_iteration: 1,
            final_artifact: artifact,
            refiner_calls: 0,
            warnings: vec!["all reviewers disabled; output was not examined".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("loop `{loop_id}` iteration {iteration}, {role}: {source}")]
    Provider {
        loop_id: String,
        iteration: u32,
        role: String,
        #[source]
        source: ProviderError,
    },
    #[error("loop `{loop_id}`: {source}")]
    Score {
        loop_id: String,
        #[source]
        source: ScoreError,
    },
    #[error("loop `{loop_id}` exhausted its budget of {iterations} iteration(s) with {} residual finding(s)", residual.len())]
    BudgetExhausted { loop_id: String, iterations: u32, residual: Vec<Finding> },
    #[error("loop `{loop_id}` iteration {iteration}: every pool member failed ({})", errors.join("; "))]
    AllCandidatesFailed { loop_id: String, iteration: u32, errors: Vec<String> },
}
