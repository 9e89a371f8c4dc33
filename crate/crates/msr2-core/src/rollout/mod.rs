//! Rollout engine: interleaves policy generation with routed retrieval under
//! a turn budget.
//!
//! Each turn samples one chunk of text that ends at a stop tag. A complete
//! search block routes its query, retrieves top-k evidence, and inserts an
//! information block; a complete answer block terminates the rollout; any
//! other chunk gets the fixed rethink message appended. Environment-inserted
//! text (information, rethink) is origin-marked so the optimizer can mask it.

mod trace;

pub use trace::{read_traces, write_traces};

use crate::clients::{truncate_at_stop, validate_output, ClientError, GenerationRequest, Generator};
use crate::retrieval::{Evidence, RetrievalError, SourceRegistry};
use crate::tag_protocol::{
    extract_search, parse_trajectory, render_information_body, segment_token_ids, Origin, Segment,
    SegmentKind, Span,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Message appended when a turn produces neither a search nor an answer.
pub const RETHINK_MESSAGE: &str = "My action is not correct. Let me rethink.";

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("invalid rollout config: {0}")]
    InvalidConfig(String),
    #[error("fact alone occupies {got} tokens, over the {limit}-token prompt budget")]
    FactTooLong { got: usize, limit: usize },
    #[error("generator failed on turn {turn}: {source}")]
    Aborted {
        turn: usize,
        source: ClientError,
        partial: Box<Trajectory>,
    },
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("trace file error: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Max dialogue turns per rollout.
    pub budget_b: usize,
    /// Evidence items per search.
    pub top_k: usize,
    pub max_prompt_tokens: usize,
    pub max_response_tokens: usize,
    pub stop_tags: Vec<String>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            budget_b: 8,
            top_k: 3,
            max_prompt_tokens: 16_384,
            max_response_tokens: 8_192,
            stop_tags: vec!["</search>".to_string(), "</answer>".to_string()],
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), RolloutError> {
        for (name, value) in [
            ("budget_b", self.budget_b),
            ("top_k", self.top_k),
            ("max_prompt_tokens", self.max_prompt_tokens),
            ("max_response_tokens", self.max_response_tokens),
        ] {
            if value == 0 {
                return Err(RolloutError::InvalidConfig(format!(
                    "{name} must be positive"
                )));
            }
        }
        for required in ["</search>", "</answer>"] {
            if !self.stop_tags.iter().any(|t| t == required) {
                return Err(RolloutError::InvalidConfig(format!(
                    "stop_tags must include {required:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    Answered,
    BudgetExhausted,
}

/// One complete rollout: ordered segments plus the aligned token/origin
/// arrays the optimizer consumes.
///
/// Tokens are the concatenated whitespace tokens of each segment's rendered
/// text, so re-parsing the rendered trajectory reproduces the same spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub input_fact: String,
    pub segments: Vec<Segment>,
    pub tokens: Vec<u32>,
    pub origin_mask: Vec<Origin>,
    pub search_count: usize,
    pub budget_used: usize,
    pub terminal: Terminal,
    /// Searches whose tag mapped to no registered source.
    pub route_warnings: usize,
    /// Evidence lists in search order, enough to replay reward computation.
    pub evidence: Vec<Vec<Evidence>>,
}

impl Trajectory {
    fn new(input_fact: &str) -> Self {
        Self {
            input_fact: input_fact.to_string(),
            segments: Vec::new(),
            tokens: Vec::new(),
            origin_mask: Vec::new(),
            search_count: 0,
            budget_used: 0,
            terminal: Terminal::BudgetExhausted,
            route_warnings: 0,
            evidence: Vec::new(),
        }
    }

    fn push_segment(&mut self, mut segment: Segment) {
        let ids = segment_token_ids(&segment);
        segment.token_span = Span {
            start: self.tokens.len(),
            end: self.tokens.len() + ids.len(),
        };
        self.origin_mask.extend(ids.iter().map(|_| segment.origin));
        self.tokens.extend(ids);
        self.segments.push(segment);
    }

    /// Full rollout text, tags included.
    pub fn rendered(&self) -> String {
        crate::tag_protocol::render_segments(&self.segments)
    }

    /// Per-token mask: true where the policy generated the token.
    pub fn gen_mask(&self) -> Vec<bool> {
        self.origin_mask
            .iter()
            .map(|&o| o == Origin::Generated)
            .collect()
    }

    pub fn generated_token_count(&self) -> usize {
        self.origin_mask
            .iter()
            .filter(|&&o| o == Origin::Generated)
            .count()
    }

    /// Cross-checks the origin mask against a re-parse of the rendered text:
    /// environment tokens must be exactly those of information and rethink
    /// segments.
    pub fn check_origin_soundness(&self) -> bool {
        let Ok(reparsed) = parse_trajectory(&self.rendered()) else {
            return false;
        };
        let mut expected = Vec::new();
        for seg in &reparsed {
            let n = seg.token_count();
            expected.extend(std::iter::repeat(seg.origin).take(n));
        }
        expected == self.origin_mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Search,
    Answer,
    Malformed,
}

/// Classifies one turn's chunk: a complete search block wins, then a complete
/// answer block, anything else is malformed.
pub fn classify_action(chunk: &str) -> ActionKind {
    let Ok(segments) = parse_trajectory(chunk) else {
        return ActionKind::Malformed;
    };
    if segments.iter().any(|s| s.kind == SegmentKind::Search) {
        return ActionKind::Search;
    }
    if segments.iter().any(|s| s.kind == SegmentKind::Answer) {
        return ActionKind::Answer;
    }
    ActionKind::Malformed
}

/// Keeps the fact prefix and the most recent whole segment runs so the total
/// stays within `max_prompt_tokens`; never splits a run.
pub fn truncate_context(
    fact_tokens: &[u32],
    segment_runs: &[Vec<u32>],
    max_prompt_tokens: usize,
) -> Result<Vec<u32>, RolloutError> {
    let first_kept = first_kept_run(
        fact_tokens.len(),
        segment_runs.iter().map(Vec::len),
        max_prompt_tokens,
    )?;
    let mut out = fact_tokens.to_vec();
    for run in &segment_runs[first_kept..] {
        out.extend_from_slice(run);
    }
    Ok(out)
}

fn first_kept_run(
    fact_len: usize,
    run_lens: impl Iterator<Item = usize>,
    max_prompt_tokens: usize,
) -> Result<usize, RolloutError> {
    if fact_len > max_prompt_tokens {
        return Err(RolloutError::FactTooLong {
            got: fact_len,
            limit: max_prompt_tokens,
        });
    }
    let lens: Vec<usize> = run_lens.collect();
    let mut total: usize = fact_len + lens.iter().sum::<usize>();
    let mut first_kept = 0;
    while total > max_prompt_tokens && first_kept < lens.len() {
        total -= lens[first_kept];
        first_kept += 1;
    }
    Ok(first_kept)
}

fn build_context(
    fact: &str,
    trajectory: &Trajectory,
    config: &RolloutConfig,
) -> Result<String, RolloutError> {
    let fact_len = fact.split_whitespace().count();
    let first_kept = first_kept_run(
        fact_len,
        trajectory.segments.iter().map(Segment::token_count),
        config.max_prompt_tokens,
    )?;
    let mut context = fact.to_string();
    context.push('\n');
    for segment in &trajectory.segments[first_kept..] {
        context.push_str(&segment.rendered());
    }
    Ok(context)
}

/// Runs one rollout of the generate/search/insert loop.
///
/// Per turn: generate until a stop tag, append the chunk, then either insert
/// routed evidence (search), terminate (answer), or append the rethink
/// message (anything else). Terminates after at most `config.budget_b` turns
/// for any generator.
pub fn run_rollout(
    fact: &str,
    generator: &dyn Generator,
    registry: &SourceRegistry,
    config: &RolloutConfig,
) -> Result<Trajectory, RolloutError> {
    config.validate()?;
    let mut trajectory = Trajectory::new(fact);
    // Surfaces FactTooLong before the first generator call.
    build_context(fact, &trajectory, config)?;

    for turn in 0..config.budget_b {
        let request = GenerationRequest {
            context: build_context(fact, &trajectory, config)?,
            stop_tags: config.stop_tags.clone(),
            max_new_tokens: config.max_response_tokens,
        };
        let output = generator
            .generate(&request)
            .and_then(|out| validate_output(&generator.caps(), &out).map(|()| out))
            .map_err(|source| RolloutError::Aborted {
                turn,
                source,
                partial: Box::new(trajectory.clone()),
            })?;
        trajectory.budget_used += 1;

        let chunk = truncate_at_stop(&output.text, &config.stop_tags);
        // Fail soft on unparsable chunks: treat the whole turn as plain text.
        let parsed =
            parse_trajectory(&chunk).unwrap_or_else(|_| vec![Segment::plain(chunk.clone())]);

        let search_at = parsed.iter().position(|s| s.kind == SegmentKind::Search);
        let answer_at = parsed.iter().position(|s| s.kind == SegmentKind::Answer);

        match (search_at, answer_at) {
            (Some(idx), _) => {
                // One action per turn: drop anything after the search block.
                for segment in &parsed[..=idx] {
                    trajectory.push_segment(segment.clone());
                }
                match extract_search(&parsed[idx]) {
                    Ok(action) => {
                        let decision = registry.route(&action);
                        if decision.unknown_tag {
                            trajectory.route_warnings += 1;
                        }
                        trajectory.search_count += 1;
                        let evidence =
                            match registry.top_k(&decision.source_id, &action.query, config.top_k)
                            {
                                Ok(evidence) => evidence,
                                Err(RetrievalError::EmptyQuery) => Vec::new(),
                                Err(other) => return Err(other.into()),
                            };
                        trajectory.push_segment(Segment::new(
                            SegmentKind::Information,
                            render_information_body(&evidence),
                        ));
                        trajectory.evidence.push(evidence);
                    }
                    // An unusable search (empty query) is a malformed action.
                    Err(_) => {
                        trajectory
                            .push_segment(Segment::new(SegmentKind::Rethink, RETHINK_MESSAGE));
                    }
                }
            }
            (None, Some(idx)) => {
                for segment in &parsed[..=idx] {
                    trajectory.push_segment(segment.clone());
                }
                trajectory.terminal = Terminal::Answered;
                return Ok(trajectory);
            }
            (None, None) => {
                for segment in parsed {
                    trajectory.push_segment(segment);
                }
                trajectory.push_segment(Segment::new(SegmentKind::Rethink, RETHINK_MESSAGE));
            }
        }
    }

    trajectory.terminal = Terminal::BudgetExhausted;
    Ok(trajectory)
}
