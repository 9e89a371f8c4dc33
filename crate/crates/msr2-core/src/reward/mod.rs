//! Trajectory rewards: interval-class outcome scoring, rubric-judged process
//! scoring, and their weighted mix `R = (1 - λ_r)·O + λ_r·P`.

mod correlation;
mod judge;

pub use correlation::{kendall_tau_b, rank_correlations, spearman_rho};
pub use judge::{
    judge_factors, render_judge_prompt, score_trajectory, RubricTemplate, TrajectoryScore,
    RUBRIC_SHA256,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default mixing weight for the process reward.
pub const DEFAULT_LAMBDA_R: f64 = 0.2;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("sentence value {0} is not a finite non-negative month count")]
    InvalidSentence(f64),
    #[error("interval table must have exactly {expected} boundaries, got {got}")]
    WrongBoundaryCount { expected: usize, got: usize },
    #[error("interval boundaries must be finite, positive, strictly increasing")]
    InvalidBoundaries,
    #[error("interval table file is invalid: {0}")]
    TableParse(String),
    #[error("judge reply {0:?} has no single integer answer")]
    JudgeParseFailure(String),
    #[error("rank correlation undefined for constant input")]
    CorrelationUndefined,
    #[error("rank correlation needs equal lengths >= 2, got {0} and {1}")]
    CorrelationLength(usize, usize),
    #[error("rubric template digest {found} does not match pinned {expected}")]
    RubricDigestMismatch { expected: String, found: String },
    #[error("judge call failed: {0}")]
    Judge(#[from] crate::clients::ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A prison term in months. Finite and non-negative by construction; valid
/// gold labels additionally lie in (0, 600].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceValue(f64);

impl SentenceValue {
    pub fn new(months: f64) -> Result<Self, RewardError> {
        if !months.is_finite() || months < 0.0 {
            return Err(RewardError::InvalidSentence(months));
        }
        Ok(Self(months))
    }

    pub fn months(self) -> f64 {
        self.0
    }

    /// Whether this value is usable as a gold label.
    pub fn is_valid_gold(self) -> bool {
        self.0 > 0.0 && self.0 <= 600.0
    }
}

/// Ten left-open, right-closed month intervals: `(0, b0], (b0, b1], ...,
/// (b8, ∞)`. Exactly nine boundaries define the ten classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    boundaries_months: Vec<f64>,
}

pub const INTERVAL_CLASS_COUNT: usize = 10;

impl IntervalTable {
    pub fn new(boundaries_months: Vec<f64>) -> Result<Self, RewardError> {
        if boundaries_months.len() != INTERVAL_CLASS_COUNT - 1 {
            return Err(RewardError::WrongBoundaryCount {
                expected: INTERVAL_CLASS_COUNT - 1,
                got: boundaries_months.len(),
            });
        }
        let mut prev = 0.0;
        for &b in &boundaries_months {
            if !b.is_finite() || b <= prev {
                return Err(RewardError::InvalidBoundaries);
            }
            prev = b;
        }
        Ok(Self { boundaries_months })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries_months
    }

    pub fn class_count(&self) -> usize {
        INTERVAL_CLASS_COUNT
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RewardError> {
        let bytes = std::fs::read(path)?;
        let table: IntervalTable = serde_json::from_slice(&bytes)
            .map_err(|e| RewardError::TableParse(e.to_string()))?;
        Self::new(table.boundaries_months)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), RewardError> {
        std::fs::write(path, serde_json::to_vec_pretty(self).unwrap())?;
        Ok(())
    }
}

impl Default for IntervalTable {
    /// Splits at 6, 9, and 12 months, then 2..5 years, 7 years, and 10 years,
    /// with everything above 10 years in the last class.
    fn default() -> Self {
        Self::new(vec![6.0, 9.0, 12.0, 24.0, 36.0, 48.0, 60.0, 84.0, 120.0]).unwrap()
    }
}

/// Class index 0..=9 whose interval contains `value`; boundary values belong
/// to the class on their left (right-closed intervals).
pub fn months_to_class(value: SentenceValue, table: &IntervalTable) -> usize {
    for (i, &boundary) in table.boundaries().iter().enumerate() {
        if value.months() <= boundary {
            return i;
        }
    }
    INTERVAL_CLASS_COUNT - 1
}

/// 1 iff the prediction parses and lands in the gold interval class.
pub fn outcome_reward(
    pred: Option<SentenceValue>,
    gold: SentenceValue,
    table: &IntervalTable,
) -> u8 {
    match pred {
        Some(p) if months_to_class(p, table) == months_to_class(gold, table) => 1,
        _ => 0,
    }
}

/// Normalizes a 0..=10 rubric score into [0, 1].
pub fn process_reward(score: u8) -> f64 {
    f64::from(score.min(10)) / 10.0
}

/// `R = (1 - λ_r)·O + λ_r·P`.
pub fn total_reward(outcome: u8, process: f64, lambda_r: f64) -> f64 {
    debug_assert!(outcome <= 1);
    debug_assert!((0.0..=1.0).contains(&process));
    debug_assert!((0.0..=1.0).contains(&lambda_r));
    (1.0 - lambda_r) * f64::from(outcome) + lambda_r * process
}

/// Per-trajectory reward decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub outcome: u8,
    pub process: f64,
    pub lambda_r: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(outcome: u8, process: f64, lambda_r: f64) -> Self {
        Self {
            outcome,
            process,
            lambda_r,
            total: total_reward(outcome, process, lambda_r),
        }
    }
}
