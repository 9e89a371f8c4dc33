//! Synthetic four-source routing task.
//!
//! Each case is `case_{offense}_{nonce}`: the offense kind determines which
//! source holds the controlling document, and the per-case nonce selects the
//! document whose text reveals the correct term. The term cannot be inferred
//! from the fact alone, so answering well requires retrieving from the right
//! source; a query routed to the wrong source retrieves that source's
//! same-nonce document, whose term always lands in a different interval
//! class.
//!
//! The policy makes two real decisions per case. It first cites a sentencing
//! factor; routing then conditions on that stated analysis (a wrong factor
//! word sends routing down the wrong path). It then picks a target source
//! tag. After evidence arrives, the answer is copied mechanically from the
//! top-ranked document. Under the uniform policy both decisions are
//! four-way, putting the expected total reward at exactly
//! 0.8 * 1/4 + 0.2 * 1/4 = 0.25 with the default reward mix.

use super::grad::{Episode, EpisodeStep, TokenRecord};
use super::policy::ToyPolicy;
use super::GrpoError;
use crate::clients::{
    truncate_at_stop, ClientError, GenerationOutput, GenerationRequest, Generator, GeneratorCaps,
    Judge,
};
use crate::retrieval::{
    build_source, CorpusRecord, HashEmbedder, IndexStrategy, SourceConfig, SourceRegistry,
};
use crate::reward::{score_trajectory, IntervalTable, SentenceValue, TrajectoryScore};
use crate::rollout::{run_rollout, RolloutConfig, Trajectory};
use crate::tag_protocol::Origin;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;

pub const TOPICS: [&str; 4] = ["theft", "fraud", "robbery", "bribery"];
pub const TOPIC_SOURCES: [&str; 4] = ["statutes", "guidelines", "precedents", "books"];
pub const SOURCE_TAGS: [&str; 4] = ["statute", "guideline", "precedent", "book"];
pub const FACTOR_WORDS: [&str; 4] = [
    "pickpocketing_in_public",
    "amount_huge_threshold",
    "violence_with_weapon",
    "official_position_abuse",
];
/// Candidate terms in months; classes 3, 4, 5, 6 under the default table.
pub const VALUE_MONTHS: [u32; 4] = [18, 30, 42, 54];
/// Rendered when no term marker was retrieved; always the wrong class.
pub const UNKNOWN_ANSWER_MONTHS: u32 = 3;

pub const NONCE_COUNT: usize = 4;
pub const N_STATES: usize = 13;
pub const N_ACTIONS: usize = 13;

const STATE_FACT: usize = 0; // ..4, by topic
const STATE_ROUTE: usize = 4; // ..8, by cited factor word
const STATE_SAW: usize = 8; // ..12, by retrieved term value
const STATE_SAW_NONE: usize = 12;

const ACTION_FACTOR: usize = 0; // ..4
const ACTION_SEARCH: usize = 4; // ..8
const ACTION_COPY: usize = 8; // ..12
const ACTION_UNKNOWN: usize = 12;

const TOY_EMBED_DIM: usize = 256;

/// Term value index revealed by the correct document for `(topic, nonce)`.
pub fn value_index(topic: usize, nonce: usize) -> usize {
    (topic + nonce) % VALUE_MONTHS.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseId {
    pub topic: usize,
    pub nonce: usize,
}

impl CaseId {
    pub fn fact(&self) -> String {
        format!("case_{}_n{}", TOPICS[self.topic], self.nonce)
    }

    pub fn gold_months(&self) -> SentenceValue {
        SentenceValue::new(f64::from(VALUE_MONTHS[value_index(self.topic, self.nonce)])).unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct ToyEnv {
    pub lambda_r: f64,
    pub table: IntervalTable,
    pub rollout: RolloutConfig,
}

impl Default for ToyEnv {
    fn default() -> Self {
        Self {
            lambda_r: crate::reward::DEFAULT_LAMBDA_R,
            table: IntervalTable::default(),
            rollout: RolloutConfig::default(),
        }
    }
}

impl ToyEnv {
    pub fn with_lambda(lambda_r: f64) -> Self {
        Self {
            lambda_r,
            ..Default::default()
        }
    }

    pub fn sample_case(&self, rng: &mut impl Rng) -> CaseId {
        CaseId {
            topic: rng.gen_range(0..TOPICS.len()),
            nonce: rng.gen_range(0..NONCE_COUNT),
        }
    }

    /// Per-state legal actions: fact states cite factors, route states pick a
    /// source, evidence states copy (or admit ignorance) mechanically.
    pub fn action_masks(&self) -> Vec<Vec<bool>> {
        let mut masks = vec![vec![false; N_ACTIONS]; N_STATES];
        for topic in 0..4 {
            for a in ACTION_FACTOR..ACTION_FACTOR + 4 {
                masks[STATE_FACT + topic][a] = true;
            }
        }
        for cited in 0..4 {
            for a in ACTION_SEARCH..ACTION_SEARCH + 4 {
                masks[STATE_ROUTE + cited][a] = true;
            }
        }
        for value in 0..4 {
            masks[STATE_SAW + value][ACTION_COPY + value] = true;
        }
        masks[STATE_SAW_NONE][ACTION_UNKNOWN] = true;
        masks
    }

    pub fn fresh_policy(&self) -> ToyPolicy {
        ToyPolicy::zeros(N_STATES, N_ACTIONS).with_masks(self.action_masks())
    }

    fn topic_of_fact(&self, fact_line: &str) -> Option<usize> {
        let rest = fact_line.strip_prefix("case_")?;
        TOPICS
            .iter()
            .position(|t| rest.starts_with(t) && rest[t.len()..].starts_with("_n"))
    }

    fn last_marker(&self, text: &str) -> Option<usize> {
        let block_start = text.rfind("<information>")?;
        let block = &text[block_start..];
        let marker = block.find("term_")?;
        let rest = &block[marker + "term_".len()..];
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let months: u32 = digits.parse().ok()?;
        VALUE_MONTHS.iter().position(|&v| v == months)
    }

    /// Maps the visible context (fact, rollout so far, partial chunk) onto
    /// one of the tabular states.
    pub fn extract_state(&self, full_text: &str) -> Result<usize, GrpoError> {
        if let Some(block_start) = full_text.rfind("<information>") {
            return Ok(match self.last_marker(&full_text[block_start..]) {
                Some(value) => STATE_SAW + value,
                None => STATE_SAW_NONE,
            });
        }
        if let Some(pos) = full_text.rfind("<factors>") {
            let after = &full_text[pos + "<factors>".len()..];
            if let Some(cited) = FACTOR_WORDS
                .iter()
                .position(|w| after.starts_with(w))
            {
                return Ok(STATE_ROUTE + cited);
            }
        }
        let fact_line = full_text.lines().next().unwrap_or("");
        self.topic_of_fact(fact_line)
            .map(|topic| STATE_FACT + topic)
            .ok_or_else(|| {
                GrpoError::LengthMismatch {
                    index: 0,
                    message: format!("unrecognizable context {fact_line:?}"),
                }
            })
    }

    /// Turn text for an action. Every rendering is a single whitespace token,
    /// so policy decisions align one-to-one with trajectory tokens.
    pub fn render_action(&self, action: usize, fact: &str) -> String {
        match action {
            a if a < ACTION_SEARCH => format!("<factors>{}</factors>", FACTOR_WORDS[a]),
            a if a < ACTION_COPY => {
                let tag = SOURCE_TAGS[a - ACTION_SEARCH];
                format!("<search><{tag}>{fact}</{tag}></search>")
            }
            a if a < ACTION_UNKNOWN => {
                format!("<answer>{}</answer>", VALUE_MONTHS[a - ACTION_COPY])
            }
            _ => format!("<answer>{UNKNOWN_ANSWER_MONTHS}</answer>"),
        }
    }

    /// Corpora for the four sources, one strategy each: dense statutes,
    /// lexical guidelines and precedents, hybrid books.
    pub fn build_registry(&self) -> Result<SourceRegistry, crate::retrieval::RetrievalError> {
        let embedder = std::sync::Arc::new(HashEmbedder::new(TOY_EMBED_DIM));
        let strategies = [
            IndexStrategy::DenseApprox,
            IndexStrategy::Lexical,
            IndexStrategy::Lexical,
            IndexStrategy::Hybrid,
        ];
        let mut builder = SourceRegistry::builder("statutes", embedder.clone());
        for topic in 0..TOPICS.len() {
            let records: Vec<CorpusRecord> = (0..NONCE_COUNT)
                .map(|nonce| {
                    let value = VALUE_MONTHS[value_index(topic, nonce)];
                    CorpusRecord::new(
                        format!("{}-n{nonce}", TOPICS[topic]),
                        format!(
                            "case_{}_n{nonce} record term_{value}_months applicable",
                            TOPICS[topic]
                        ),
                    )
                })
                .collect();
            let source = build_source(
                SourceConfig::new(TOPIC_SOURCES[topic], strategies[topic], TOY_EMBED_DIM),
                records,
                embedder.as_ref(),
            )?;
            builder = builder
                .source(source)
                .alias(SOURCE_TAGS[topic], TOPIC_SOURCES[topic]);
        }
        builder.build()
    }
}

/// Judge mock for the toy task: full marks iff the cited factor matches the
/// case's offense kind. Replies in the standard answer-tag format.
#[derive(Debug, Clone, Default)]
pub struct ToyJudge;

impl Judge for ToyJudge {
    fn judge(&self, prompt: &str) -> Result<String, ClientError> {
        let topic = prompt
            .lines()
            .find_map(|line| line.strip_prefix("Case Facts: "))
            .and_then(|fact| {
                let rest = fact.strip_prefix("case_")?;
                TOPICS.iter().position(|t| rest.starts_with(t))
            });
        let factors_ok = match topic {
            Some(topic) => prompt
                .lines()
                .skip_while(|line| !line.starts_with("Sentencing Factors:"))
                .any(|line| line.contains(FACTOR_WORDS[topic])),
            None => false,
        };
        Ok(if factors_ok {
            "<answer>10</answer>".to_string()
        } else {
            "<answer>0</answer>".to_string()
        })
    }
}

/// Generator adapter: samples policy actions per state and records the tape
/// needed to align log-probs with trajectory tokens afterwards.
pub struct ToyPolicyGenerator<'a> {
    env: &'a ToyEnv,
    policy: &'a ToyPolicy,
    rng: RefCell<ChaCha8Rng>,
    tape: RefCell<Vec<EpisodeStep>>,
}

impl<'a> ToyPolicyGenerator<'a> {
    pub fn new(env: &'a ToyEnv, policy: &'a ToyPolicy, seed: u64) -> Self {
        Self {
            env,
            policy,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            tape: RefCell::new(Vec::new()),
        }
    }

    pub fn into_tape(self) -> Vec<EpisodeStep> {
        self.tape.into_inner()
    }
}

impl Generator for ToyPolicyGenerator<'_> {
    fn caps(&self) -> GeneratorCaps {
        GeneratorCaps::default()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutput, ClientError> {
        let fact = request.context.lines().next().unwrap_or("").to_string();
        let mut chunk = String::new();
        // A turn is at most factors + search; four is a hard safety cap.
        for _ in 0..4 {
            let full = format!("{}{}", request.context, chunk);
            let state = self
                .env
                .extract_state(&full)
                .map_err(|e| ClientError::InvalidInput(e.to_string()))?;
            let (action, logp) = self.policy.sample(state, &mut *self.rng.borrow_mut());
            self.tape.borrow_mut().push(EpisodeStep {
                state,
                action,
                logp_old: logp,
            });
            if !chunk.is_empty() {
                chunk.push(' ');
            }
            let text = self.env.render_action(action, &fact);
            chunk.push_str(&text);
            if request.stop_tags.iter().any(|tag| text.contains(tag.as_str())) {
                break;
            }
        }
        let text = truncate_at_stop(&chunk, &request.stop_tags);
        let tokens = text.split_whitespace().map(str::to_string).collect();
        Ok(GenerationOutput {
            text,
            tokens,
            logprobs: None,
        })
    }
}

/// One complete toy episode: the trajectory, its reward decomposition, and
/// the per-token episode record the optimizer consumes.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub case: CaseId,
    pub trajectory: Trajectory,
    pub score: TrajectoryScore,
    pub episode: Episode,
}

/// Aligns the sampling tape with the trajectory's generated tokens.
fn build_episode(
    trajectory: &Trajectory,
    tape: Vec<EpisodeStep>,
    reward: f64,
) -> Result<Episode, GrpoError> {
    let mut tokens = Vec::with_capacity(trajectory.tokens.len());
    let mut cursor = 0usize;
    for (t, origin) in trajectory.origin_mask.iter().enumerate() {
        match origin {
            Origin::Generated => {
                let step = tape.get(cursor).copied().ok_or(GrpoError::LengthMismatch {
                    index: 0,
                    message: format!("tape exhausted at trajectory token {t}"),
                })?;
                cursor += 1;
                tokens.push(TokenRecord::Generated(step));
            }
            Origin::Environment => tokens.push(TokenRecord::Environment),
        }
    }
    if cursor != tape.len() {
        return Err(GrpoError::LengthMismatch {
            index: 0,
            message: format!("{} tape entries for {cursor} generated tokens", tape.len()),
        });
    }
    Ok(Episode { reward, tokens })
}

/// Rolls out one case with the given policy and scores it.
pub fn run_episode(
    env: &ToyEnv,
    policy: &ToyPolicy,
    registry: &SourceRegistry,
    judge: &dyn Judge,
    case: CaseId,
    seed: u64,
) -> Result<EpisodeOutcome, GrpoError> {
    let generator = ToyPolicyGenerator::new(env, policy, seed);
    let trajectory = run_rollout(&case.fact(), &generator, registry, &env.rollout)?;
    let tape = generator.into_tape();
    let score = score_trajectory(&trajectory, case.gold_months(), &env.table, judge, env.lambda_r)?;
    let episode = build_episode(&trajectory, tape, score.breakdown.total)?;
    Ok(EpisodeOutcome {
        case,
        trajectory,
        score,
        episode,
    })
}

/// Monte-Carlo mean total reward of the uniform policy.
pub fn uniform_policy_baseline(
    env: &ToyEnv,
    registry: &SourceRegistry,
    episodes: usize,
    seed: u64,
) -> Result<f64, GrpoError> {
    let policy = env.fresh_policy();
    let judge = ToyJudge;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..episodes {
        let case = env.sample_case(&mut rng);
        let outcome = run_episode(env, &policy, registry, &judge, case, rng.gen())?;
        total += outcome.score.breakdown.total;
    }
    Ok(total / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::Terminal;

    #[test]
    fn correct_source_returns_the_case_document_first() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        for topic in 0..4 {
            for nonce in 0..NONCE_COUNT {
                let case = CaseId { topic, nonce };
                let hits = registry
                    .top_k(TOPIC_SOURCES[topic], &case.fact(), 3)
                    .unwrap();
                assert_eq!(
                    hits[0].doc_id,
                    format!("{}-n{nonce}", TOPICS[topic]),
                    "case {:?} via {}",
                    case.fact(),
                    TOPIC_SOURCES[topic]
                );
                let value = VALUE_MONTHS[value_index(topic, nonce)];
                assert!(hits[0].text.contains(&format!("term_{value}_months")));
            }
        }
    }

    #[test]
    fn wrong_source_reveals_a_different_class() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let table = IntervalTable::default();
        for topic in 0..4 {
            for nonce in 0..NONCE_COUNT {
                let case = CaseId { topic, nonce };
                let gold_class =
                    crate::reward::months_to_class(case.gold_months(), &table);
                for wrong in (0..4).filter(|&j| j != topic) {
                    let hits = registry
                        .top_k(TOPIC_SOURCES[wrong], &case.fact(), 3)
                        .unwrap();
                    let marker = env.last_marker(&format!(
                        "<information>\n{}\n</information>",
                        hits[0].text
                    ));
                    let seen = SentenceValue::new(f64::from(
                        VALUE_MONTHS[marker.expect("marker present")],
                    ))
                    .unwrap();
                    assert_ne!(
                        crate::reward::months_to_class(seen, &table),
                        gold_class,
                        "case {:?} via wrong source {}",
                        case.fact(),
                        TOPIC_SOURCES[wrong]
                    );
                }
            }
        }
    }

    #[test]
    fn episode_runs_two_turns_and_aligns_tape() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let policy = env.fresh_policy();
        let outcome = run_episode(
            &env,
            &policy,
            &registry,
            &ToyJudge,
            CaseId { topic: 1, nonce: 2 },
            99,
        )
        .unwrap();

        assert_eq!(outcome.trajectory.terminal, Terminal::Answered);
        assert_eq!(outcome.trajectory.budget_used, 2);
        assert_eq!(outcome.trajectory.search_count, 1);
        // factors + search + answer decisions.
        assert_eq!(outcome.episode.generated_count(), 3);
        assert!(outcome.trajectory.check_origin_soundness());
    }

    #[test]
    fn an_optimal_hand_policy_earns_full_reward() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let mut policy = env.fresh_policy();
        // Sharpen factors toward the topic's word and routing toward the
        // topic's source.
        for topic in 0..4 {
            *policy.param_mut(STATE_FACT + topic, ACTION_FACTOR + topic) = 50.0;
            *policy.param_mut(STATE_ROUTE + topic, ACTION_SEARCH + topic) = 50.0;
        }
        let judge = ToyJudge;
        for topic in 0..4 {
            for nonce in 0..NONCE_COUNT {
                let outcome = run_episode(
                    &env,
                    &policy,
                    &registry,
                    &judge,
                    CaseId { topic, nonce },
                    7,
                )
                .unwrap();
                assert_eq!(outcome.score.breakdown.outcome, 1);
                assert_eq!(outcome.score.breakdown.process, 1.0);
                assert_eq!(outcome.score.breakdown.total, 1.0);
            }
        }
    }

    #[test]
    fn miscited_factors_break_learned_routing() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let mut policy = env.fresh_policy();
        for topic in 0..4 {
            // Always cite the wrong factor (topic+1), routing itself learned
            // perfectly (route state j -> source j).
            *policy.param_mut(STATE_FACT + topic, ACTION_FACTOR + (topic + 1) % 4) = 50.0;
            *policy.param_mut(STATE_ROUTE + topic, ACTION_SEARCH + topic) = 50.0;
        }
        let outcome = run_episode(
            &env,
            &policy,
            &registry,
            &ToyJudge,
            CaseId { topic: 0, nonce: 0 },
            7,
        )
        .unwrap();
        assert_eq!(outcome.score.breakdown.outcome, 0);
        assert_eq!(outcome.score.breakdown.process, 0.0);
    }

    #[test]
    fn uniform_baseline_sits_near_one_quarter() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let mean = uniform_policy_baseline(&env, &registry, 400, 12345).unwrap();
        assert!((mean - 0.25).abs() < 0.08, "uniform baseline {mean}");
    }
}
