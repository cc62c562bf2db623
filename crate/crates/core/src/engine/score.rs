use std::collections::BTreeMap;

use thiserror::Error;

use crate::schema::Feedback;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("feedback from `{reviewer}` has no score for axis `{axis}`")]
    MissingAxis { reviewer: String, axis: String },
    #[error("nothing to aggregate")]
    Empty,
}

/// Unweighted mean over every (feedback, axis) score.
pub fn aggregate_scores(feedback: &[Feedback], axes: &[&str]) -> Result<f64, ScoreError> {
    aggregate_weighted(feedback, axes, &BTreeMap::new())
}

/// Weighted mean over every (feedback, axis) score; axes absent from `weights` weigh 1.
pub fn aggregate_weighted(
    feedback: &[Feedback],
    axes: &[&str],
    weights: &BTreeMap<String, f64>,
) -> Result<f64, ScoreError> {
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for f in feedback {
        for axis in axes {
            let score = f.scores.get(*axis).ok_or_else(|| ScoreError::MissingAxis {
                reviewer: f.reviewer_id.clone(),
                axis: axis.to_string(),
            })?;
            let w = weights.get(*axis).copied().unwrap_or(1.0);
            total += w * score;
            weight_sum += w;
        }
    }
    if weight_sum == 0.0 {
        return Err(ScoreError::Empty);
    }
    Ok(total / weight_sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fb(scores: &[(&str, f64)]) -> Feedback {
        Feedback::approve("r").with_scores(scores.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }

    #[test]
    fn single_score_is_identity() {
        assert_eq!(aggregate_scores(&[fb(&[("q", 1.0)])], &["q"]).unwrap(), 1.0);
    }

    #[test]
    fn mean_of_two_reviewers() {
        let got = aggregate_scores(&[fb(&[("q", 0.4)]), fb(&[("q", 0.8)])], &["q"]).unwrap();
        assert!((got - 0.6).abs() < 1e-12);
    }

    #[test]
    fn missing_axis_is_named() {
        let err = aggregate_scores(&[fb(&[("q", 1.0)])], &["q", "n"]).unwrap_err();
        assert_eq!(err, ScoreError::MissingAxis { reviewer: "r".into(), axis: "n".into() });
    }

    #[test]
    fn weights_shift_the_mean() {
        let w = [("q".to_string(), 3.0)].into_iter().collect();
        let got = aggregate_weighted(&[fb(&[("q", 1.0), ("n", 0.0)])], &["q", "n"], &w).unwrap();
        assert!((got - 0.75).abs() < 1e-12);
    }
}
