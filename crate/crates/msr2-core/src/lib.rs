//! Core engine for sentencing-prediction rollouts that interleave policy
//! generation with routable multi-source retrieval, score trajectories with a
//! combined outcome/process reward, and optimize a policy with GRPO.
//!
//! The crate is organized around the lifecycle of one trajectory:
//!
//! - [`tag_protocol`] parses and renders the structured rollout text
//!   (`<reasoning>`, `<factors>`, `<search>`, `<information>`, `<answer>`).
//! - [`retrieval`] builds and queries per-source indexes (BM25, dense cosine,
//!   HNSW, reciprocal-rank fusion) behind a routing registry.
//! - [`rollout`] drives the generate/search/insert loop under a turn budget.
//! - [`reward`] maps answers to interval classes, scores factor lists with a
//!   rubric judge, and mixes outcome and process rewards.
//! - [`grpo`] computes group-relative advantages, the masked clipped
//!   surrogate with KL regularization, and trains a small tabular policy on a
//!   synthetic routing task end to end.
//! - [`eval`] computes accuracy and macro precision/recall/F1 over
//!   prediction files.
//! - [`clients`] defines generator/judge/embedder contracts with remote
//!   implementations and deterministic mocks, so everything runs offline.

pub mod clients;
pub mod eval;
pub mod fixtures;
pub mod grpo;
pub mod retrieval;
pub mod reward;
pub mod rollout;
pub mod tag_protocol;

pub use retrieval::{CorpusRecord, Evidence, IndexStrategy, SourceRegistry};
pub use reward::{IntervalTable, RewardBreakdown, SentenceValue};
pub use rollout::{RolloutConfig, Terminal, Trajectory};
pub use tag_protocol::{Origin, Segment, SegmentKind};
