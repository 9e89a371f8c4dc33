//! Group-relative policy optimization.
//!
//! A group of G trajectories sampled for one input is its own baseline:
//! advantages are reward z-scores within the group (population std plus a
//! stability epsilon), environment-inserted tokens are masked out of the
//! loss, and the objective is the clipped surrogate averaged per generated
//! token and per trajectory, minus a KL penalty toward a reference policy
//! under the identical masking and normalization.

mod grad;
mod policy;
pub mod toy_env;
mod train;

pub use grad::{
    assemble_group_sample, finite_difference_grad, grpo_objective, near_clip_kink, policy_grad,
    Episode, EpisodeStep, TokenRecord,
};
pub use policy::ToyPolicy;
pub use train::{train_toy, StepMetrics, ToyTrainConfig, TrainingCurve};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("group must have at least 2 trajectories, got {0}")]
    GroupTooSmall(usize),
    #[error("trajectory {index} has no generated tokens")]
    DegenerateTrajectory { index: usize },
    #[error("trajectory {index} has misaligned arrays: {message}")]
    LengthMismatch { index: usize, message: String },
    #[error("non-finite log-probability at trajectory {index}, token {token}")]
    NonFiniteLogProb { index: usize, token: usize },
    #[error("exact KL requested but trajectory {index} carries no per-token KL")]
    MissingExactKl { index: usize },
    #[error("reference distribution has zero mass where the policy has support")]
    InfiniteKl,
    #[error("distributions must share a vocabulary, got {0} and {1}")]
    VocabMismatch(usize, usize),
    #[error("policy parameters diverged (non-finite) at step {0}")]
    Diverged(usize),
    #[error("rollout failed during training: {0}")]
    Rollout(#[from] crate::rollout::RolloutError),
    #[error("reward failed during training: {0}")]
    Reward(#[from] crate::reward::RewardError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How per-token KL values are obtained from a [`TrajectorySample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KlEstimator {
    /// Use the exact per-token KL supplied by the sampler (full
    /// distributions are available, e.g. for the toy policy).
    Exact,
    /// Estimate from sampled log-probs: `exp(d) - d - 1`, `d = logp_ref -
    /// logp_new`. Non-negative and unbiased to second order.
    SampledK3,
}

/// KL aggregation across a trajectory's generated tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KlNorm {
    /// Mean over generated tokens (same 1/Z_i normalization as the
    /// surrogate). The default.
    MaskedMean,
    /// Sum over generated tokens.
    MaskedSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    /// Stability constant added to the reward std in the advantage.
    pub eps_std: f64,
    /// Clip half-width for the likelihood ratio.
    pub eps_clip: f64,
    /// KL penalty coefficient.
    pub beta_kl: f64,
    pub learning_rate: f64,
    pub kl_estimator: KlEstimator,
    pub kl_norm: KlNorm,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            eps_std: 1e-6,
            eps_clip: 0.2,
            beta_kl: 1e-3,
            learning_rate: 1e-6,
            kl_estimator: KlEstimator::SampledK3,
            kl_norm: KlNorm::MaskedMean,
        }
    }
}

/// One trajectory's contribution to a group: reward, aligned per-token
/// log-probs under the new/old/reference policies, and the generated-token
/// mask. `kl_ref` optionally carries exact per-token KL values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub reward: f64,
    pub logp_new: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub gen_mask: Vec<bool>,
    pub kl_ref: Option<Vec<f64>>,
}

impl TrajectorySample {
    fn check_alignment(&self, index: usize) -> Result<(), GrpoError> {
        let n = self.gen_mask.len();
        for (name, len) in [
            ("logp_new", self.logp_new.len()),
            ("logp_old", self.logp_old.len()),
            ("logp_ref", self.logp_ref.len()),
        ] {
            if len != n {
                return Err(GrpoError::LengthMismatch {
                    index,
                    message: format!("{name} has {len} entries for {n} tokens"),
                });
            }
        }
        if let Some(kl) = &self.kl_ref {
            if kl.len() != n {
                return Err(GrpoError::LengthMismatch {
                    index,
                    message: format!("kl_ref has {} entries for {n} tokens", kl.len()),
                });
            }
        }
        Ok(())
    }
}

/// The unit the optimizer consumes: G trajectories for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub trajectories: Vec<TrajectorySample>,
}

impl GroupSample {
    pub fn rewards(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.reward).collect()
    }
}

/// Group-relative advantages: `(R_i - mean) / (population_std + eps_std)`.
pub fn group_advantages(rewards: &[f64], eps_std: f64) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let denom = variance.sqrt() + eps_std;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Broadcasts a trajectory advantage to its tokens: generated tokens carry
/// the advantage, environment tokens carry exactly zero.
pub fn token_advantages(advantage: f64, gen_mask: &[bool]) -> Vec<f64> {
    gen_mask
        .iter()
        .map(|&generated| if generated { advantage } else { 0.0 })
        .collect()
}

/// Per-token likelihood ratios `exp(logp_new - logp_old)` on generated
/// tokens; environment tokens are defined as 1 (inert under a zero
/// advantage). Only generated positions are validated for finiteness.
pub fn likelihood_ratios(
    logp_new: &[f64],
    logp_old: &[f64],
    gen_mask: &[bool],
) -> Result<Vec<f64>, GrpoError> {
    if logp_new.len() != logp_old.len() || logp_new.len() != gen_mask.len() {
        return Err(GrpoError::LengthMismatch {
            index: 0,
            message: "ratio inputs differ in length".to_string(),
        });
    }
    let mut ratios = Vec::with_capacity(gen_mask.len());
    for (t, &generated) in gen_mask.iter().enumerate() {
        if !generated {
            ratios.push(1.0);
            continue;
        }
        if !logp_new[t].is_finite() || !logp_old[t].is_finite() {
            return Err(GrpoError::NonFiniteLogProb { index: 0, token: t });
        }
        ratios.push((logp_new[t] - logp_old[t]).exp());
    }
    Ok(ratios)
}

/// Exact categorical KL `Σ p ln(p/q)`.
pub fn kl_per_token(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::VocabMismatch(p.len(), q.len()));
    }
    let mut kl = 0.0;
    for (&pv, &qv) in p.iter().zip(q) {
        if pv == 0.0 {
            continue;
        }
        if qv == 0.0 {
            return Err(GrpoError::InfiniteKl);
        }
        kl += pv * (pv / qv).ln();
    }
    Ok(kl)
}

/// One generated token's surrogate term: `min(r·Â, clip(r, 1-ε, 1+ε)·Â)`.
pub(crate) fn token_term(ratio: f64, advantage: f64, eps_clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps_clip, 1.0 + eps_clip);
    (ratio * advantage).min(clipped * advantage)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenDiagnostic {
    pub ratio: f64,
    pub advantage: f64,
    /// True when clipping strictly lowered this token's term.
    pub clipped: bool,
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// The objective value, to maximize.
    pub objective: f64,
    /// Group-mean surrogate (before the KL penalty).
    pub surrogate: f64,
    /// Group-mean KL under the configured estimator and normalization.
    pub kl: f64,
    /// Fraction of generated tokens where clipping bound.
    pub clip_fraction: f64,
    pub estimator: KlEstimator,
    /// Per-trajectory, per-token diagnostics aligned with the inputs.
    pub tokens: Vec<Vec<TokenDiagnostic>>,
}

/// Evaluates the GRPO objective over one group.
///
/// Environment tokens are skipped entirely, never multiplied by zero, so the
/// objective is bitwise independent of their recorded log-probs.
pub fn grpo_loss(group: &GroupSample, config: &GrpoConfig) -> Result<LossBreakdown, GrpoError> {
    let advantages = group_advantages(&group.rewards(), config.eps_std)?;
    let g = group.trajectories.len() as f64;

    let mut surrogate_total = 0.0;
    let mut kl_total = 0.0;
    let mut clipped_count = 0usize;
    let mut generated_count = 0usize;
    let mut diagnostics = Vec::with_capacity(group.trajectories.len());

    for (index, sample) in group.trajectories.iter().enumerate() {
        sample.check_alignment(index)?;
        let z = sample.gen_mask.iter().filter(|&&m| m).count();
        if z == 0 {
            return Err(GrpoError::DegenerateTrajectory { index });
        }
        if config.kl_estimator == KlEstimator::Exact && sample.kl_ref.is_none() {
            return Err(GrpoError::MissingExactKl { index });
        }

        let advantage = advantages[index];
        let mut surrogate_i = 0.0;
        let mut kl_i = 0.0;
        let mut token_diags = Vec::with_capacity(sample.gen_mask.len());

        for (t, &generated) in sample.gen_mask.iter().enumerate() {
            if !generated {
                token_diags.push(TokenDiagnostic {
                    ratio: 1.0,
                    advantage: 0.0,
                    clipped: false,
                    masked: true,
                });
                continue;
            }
            let (lp_new, lp_old, lp_ref) =
                (sample.logp_new[t], sample.logp_old[t], sample.logp_ref[t]);
            if !lp_new.is_finite() || !lp_old.is_finite() || !lp_ref.is_finite() {
                return Err(GrpoError::NonFiniteLogProb { index, token: t });
            }
            let ratio = (lp_new - lp_old).exp();
            let unclipped = ratio * advantage;
            let term = token_term(ratio, advantage, config.eps_clip);
            surrogate_i += term;
            let clipped = term < unclipped;
            if clipped {
                clipped_count += 1;
            }
            generated_count += 1;

            let kl_t = match config.kl_estimator {
                KlEstimator::Exact => sample.kl_ref.as_ref().unwrap()[t],
                KlEstimator::SampledK3 => {
                    let d = lp_ref - lp_new;
                    d.exp() - d - 1.0
                }
            };
            kl_i += kl_t;

            token_diags.push(TokenDiagnostic {
                ratio,
                advantage,
                clipped,
                masked: false,
            });
        }

        surrogate_total += surrogate_i / z as f64;
        kl_total += match config.kl_norm {
            KlNorm::MaskedMean => kl_i / z as f64,
            KlNorm::MaskedSum => kl_i,
        };
        diagnostics.push(token_diags);
    }

    let surrogate = surrogate_total / g;
    let kl = kl_total / g;
    Ok(LossBreakdown {
        objective: surrogate - config.beta_kl * kl,
        surrogate,
        kl,
        clip_fraction: if generated_count == 0 {
            0.0
        } else {
            clipped_count as f64 / generated_count as f64
        },
        estimator: config.kl_estimator,
        tokens: diagnostics,
    })
}
