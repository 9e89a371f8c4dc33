//! Rubric-judged process scoring.
//!
//! The judge receives one prompt built from a pinned rubric template with
//! `{fact}` and `{factors}` placeholders and must reply with a single integer
//! in an `<answer>` tag. The template ships with the crate; loading a
//! modified copy is refused unless explicitly allowed, so scores stay
//! comparable across runs.

use super::{outcome_reward, IntervalTable, RewardBreakdown, RewardError, SentenceValue};
use crate::clients::Judge;
use crate::tag_protocol::{extract_answer, extract_factors, FactorList, SegmentKind};
use crate::rollout::Trajectory;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Pinned digest of the shipped rubric template.
pub const RUBRIC_SHA256: &str = "0ae2418146b0d818610f0ab0196ddaa9da2f55e3fed305b47d8e4cffb1edc85c";

const RUBRIC_TEXT: &str = include_str!("../../assets/factor_rubric.txt");

#[derive(Debug, Clone)]
pub struct RubricTemplate {
    text: String,
}

impl RubricTemplate {
    /// The built-in template. Always digest-verified at construction.
    pub fn pinned() -> Self {
        let template = Self {
            text: RUBRIC_TEXT.to_string(),
        };
        debug_assert_eq!(template.digest(), RUBRIC_SHA256);
        template
    }

    /// Loads a template file. Rejects content whose digest differs from the
    /// pinned one unless `allow_modified` is set.
    pub fn load(path: &std::path::Path, allow_modified: bool) -> Result<Self, RewardError> {
        let text = std::fs::read_to_string(path)?;
        let template = Self { text };
        if !allow_modified && template.digest() != RUBRIC_SHA256 {
            return Err(RewardError::RubricDigestMismatch {
                expected: RUBRIC_SHA256.to_string(),
                found: template.digest(),
            });
        }
        Ok(template)
    }

    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    fn render(&self, fact: &str, factors: &FactorList) -> String {
        let factor_lines = if factors.is_empty() {
            "(none)".to_string()
        } else {
            factors
                .factors
                .iter()
                .map(|f| format!("- {f}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        self.text
            .replace("{fact}", fact)
            .replace("{factors}", &factor_lines)
    }
}

/// Renders the rubric prompt for one fact/factor-list pair.
pub fn render_judge_prompt(fact: &str, factors: &FactorList) -> String {
    RubricTemplate::pinned().render(fact, factors)
}

fn parse_judge_reply(reply: &str) -> Result<u8, RewardError> {
    let failure = || RewardError::JudgeParseFailure(reply.to_string());
    let start = reply.find("<answer>").ok_or_else(failure)?;
    let after = &reply[start + "<answer>".len()..];
    let end = after.find("</answer>").ok_or_else(failure)?;
    let raw: i64 = after[..end].trim().parse().map_err(|_| failure())?;
    Ok(raw.clamp(0, 10) as u8)
}

/// Sends fact and factors through the rubric prompt and parses the judge's
/// integer score, clamped to 0..=10.
pub fn judge_factors(
    fact: &str,
    factors: &FactorList,
    judge: &dyn Judge,
) -> Result<u8, RewardError> {
    let prompt = render_judge_prompt(fact, factors);
    let reply = judge.judge(&prompt)?;
    parse_judge_reply(&reply)
}

/// The reward pipeline's verdict on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub breakdown: RewardBreakdown,
    pub answer: Option<SentenceValue>,
    /// One raw 0..=10 score per factors block, in trajectory order.
    pub factor_scores: Vec<u8>,
    /// Judge replies that failed to parse (each contributes a zero score).
    pub judge_failures: usize,
}

/// Scores a complete trajectory against a gold sentence.
///
/// The last answer segment wins. Every factors block is judged and the raw
/// scores averaged before normalization; an unparsable judge reply counts as
/// zero, and a trajectory with no factors block earns no process credit.
pub fn score_trajectory(
    trajectory: &Trajectory,
    gold: SentenceValue,
    table: &IntervalTable,
    judge: &dyn Judge,
    lambda_r: f64,
) -> Result<TrajectoryScore, RewardError> {
    let answer = trajectory
        .segments
        .iter()
        .rev()
        .find(|s| s.kind == SegmentKind::Answer)
        .and_then(|s| extract_answer(&s.text).ok());

    let mut factor_scores = Vec::new();
    let mut judge_failures = 0usize;
    for segment in &trajectory.segments {
        if segment.kind != SegmentKind::Factors {
            continue;
        }
        let factors = extract_factors(&segment.text);
        match judge_factors(&trajectory.input_fact, &factors, judge) {
            Ok(score) => factor_scores.push(score),
            Err(RewardError::JudgeParseFailure(_)) => {
                factor_scores.push(0);
                judge_failures += 1;
            }
            Err(other) => return Err(other),
        }
    }

    let process = if factor_scores.is_empty() {
        0.0
    } else {
        let mean =
            factor_scores.iter().map(|&s| f64::from(s)).sum::<f64>() / factor_scores.len() as f64;
        (mean / 10.0).clamp(0.0, 1.0)
    };
    let outcome = outcome_reward(answer, gold, table);

    Ok(TrajectoryScore {
        breakdown: RewardBreakdown::new(outcome, process, lambda_r),
        answer,
        factor_scores,
        judge_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{CachingJudge, ScriptedJudge};

    fn factors(items: &[&str]) -> FactorList {
        FactorList {
            factors: items.iter().map(|s| s.to_string()).collect(),
            raw_text: items.join("\n"),
        }
    }

    #[test]
    fn pinned_template_digest_matches() {
        assert_eq!(RubricTemplate::pinned().digest(), RUBRIC_SHA256);
    }

    #[test]
    fn prompt_substitutes_fact_and_factors() {
        let prompt = render_judge_prompt("the defendant stole", &factors(&["confession"]));
        assert!(prompt.contains("Case Facts: the defendant stole"));
        assert!(prompt.contains("Sentencing Factors: - confession"));
        assert!(!prompt.contains("{fact}"));
        assert!(!prompt.contains("{factors}"));
    }

    #[test]
    fn judge_score_passes_through() {
        let judge = ScriptedJudge::new("<answer>7</answer>");
        assert_eq!(judge_factors("f", &factors(&["x"]), &judge).unwrap(), 7);
    }

    #[test]
    fn out_of_range_scores_clamp() {
        let judge = ScriptedJudge::new("<answer>15</answer>");
        assert_eq!(judge_factors("f", &factors(&["x"]), &judge).unwrap(), 10);
        let negative = ScriptedJudge::new("<answer>-3</answer>");
        assert_eq!(judge_factors("f", &factors(&["x"]), &negative).unwrap(), 0);
    }

    #[test]
    fn untagged_reply_is_a_parse_failure() {
        let judge = ScriptedJudge::new("I think it is fine");
        assert!(matches!(
            judge_factors("f", &factors(&["x"]), &judge),
            Err(RewardError::JudgeParseFailure(_))
        ));
    }

    #[test]
    fn modified_rubric_is_refused_without_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rubric.txt");
        std::fs::write(&path, "custom rubric {fact} {factors}").unwrap();
        assert!(matches!(
            RubricTemplate::load(&path, false),
            Err(RewardError::RubricDigestMismatch { .. })
        ));
        assert!(RubricTemplate::load(&path, true).is_ok());
    }

    #[test]
    fn identical_prompts_hit_the_cache() {
        let judge = CachingJudge::new(ScriptedJudge::new("<answer>9</answer>"));
        let f = factors(&["restitution"]);
        judge_factors("same fact", &f, &judge).unwrap();
        judge_factors("same fact", &f, &judge).unwrap();
        assert_eq!(judge.misses(), 1);
        assert_eq!(judge.hits(), 1);
    }
}
