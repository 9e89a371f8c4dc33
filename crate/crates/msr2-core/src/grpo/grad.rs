//! Analytic policy gradient for the toy policy.
//!
//! Episodes record, per generated token, the context state, the sampled
//! action, and the sampling-time log-prob. The objective is rebuilt from the
//! live policy parameters (new log-probs and exact KL terms are functions of
//! the weights), so central finite differences over the weights check the
//! analytic gradient end to end.

use super::policy::ToyPolicy;
use super::{
    group_advantages, grpo_loss, GroupSample, GrpoConfig, GrpoError, KlEstimator, KlNorm,
    TrajectorySample,
};

/// One generated token: where the policy was, what it chose, and how likely
/// that choice was under the sampling policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStep {
    pub state: usize,
    pub action: usize,
    pub logp_old: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TokenRecord {
    Generated(EpisodeStep),
    /// Environment-inserted token (retrieved evidence, rethink text).
    Environment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub reward: f64,
    pub tokens: Vec<TokenRecord>,
}

impl Episode {
    pub fn generated_count(&self) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, TokenRecord::Generated(_)))
            .count()
    }
}

/// Materializes a [`GroupSample`] from episodes under the current policy:
/// new log-probs and exact per-token KL values come from `policy` and
/// `ref_policy`; environment slots hold inert zeros.
pub fn assemble_group_sample(
    policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    episodes: &[Episode],
) -> Result<GroupSample, GrpoError> {
    let mut trajectories = Vec::with_capacity(episodes.len());
    for episode in episodes {
        let n = episode.tokens.len();
        let mut sample = TrajectorySample {
            reward: episode.reward,
            logp_new: vec![0.0; n],
            logp_old: vec![0.0; n],
            logp_ref: vec![0.0; n],
            gen_mask: vec![false; n],
            kl_ref: Some(vec![0.0; n]),
        };
        for (t, token) in episode.tokens.iter().enumerate() {
            let TokenRecord::Generated(step) = token else {
                continue;
            };
            sample.gen_mask[t] = true;
            sample.logp_new[t] = policy.logp(step.state, step.action);
            sample.logp_old[t] = step.logp_old;
            sample.logp_ref[t] = ref_policy.logp(step.state, step.action);
            sample.kl_ref.as_mut().unwrap()[t] = policy.kl_at_state(step.state, ref_policy)?;
        }
        trajectories.push(sample);
    }
    Ok(GroupSample { trajectories })
}

/// The GRPO objective for `episodes` under the live policy parameters.
pub fn grpo_objective(
    policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    episodes: &[Episode],
    config: &GrpoConfig,
) -> Result<f64, GrpoError> {
    let group = assemble_group_sample(policy, ref_policy, episodes)?;
    Ok(grpo_loss(&group, config)?.objective)
}

/// Analytic gradient of [`grpo_objective`] with respect to the policy
/// weights (ascent direction: maximizes the objective). Same layout as
/// [`ToyPolicy::weights`].
pub fn policy_grad(
    policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    episodes: &[Episode],
    config: &GrpoConfig,
) -> Result<Vec<f64>, GrpoError> {
    let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
    let advantages = group_advantages(&rewards, config.eps_std)?;
    let g = episodes.len() as f64;
    let n_actions = policy.n_actions();
    let mut grad = vec![0.0; policy.param_count()];

    for (index, episode) in episodes.iter().enumerate() {
        let z = episode.generated_count();
        if z == 0 {
            return Err(GrpoError::DegenerateTrajectory { index });
        }
        let advantage = advantages[index];
        let surrogate_scale = 1.0 / (z as f64 * g);
        let kl_scale = match config.kl_norm {
            KlNorm::MaskedMean => config.beta_kl / (z as f64 * g),
            KlNorm::MaskedSum => config.beta_kl / g,
        };

        for (t, token) in episode.tokens.iter().enumerate() {
            let TokenRecord::Generated(step) = token else {
                continue;
            };
            if !step.logp_old.is_finite() {
                return Err(GrpoError::NonFiniteLogProb { index, token: t });
            }
            let probs = policy.probs(step.state);
            let lp_new = probs[step.action].ln();
            let ratio = (lp_new - step.logp_old).exp();
            let unclipped = ratio * advantage;
            let clipped = ratio.clamp(1.0 - config.eps_clip, 1.0 + config.eps_clip) * advantage;

            // d min(u, c) / d logp_new: the unclipped branch is active when
            // it is no larger than the clipped one; its derivative is A*r.
            // The clipped branch is constant in the weights.
            let dterm_dlp = if unclipped <= clipped {
                advantage * ratio
            } else {
                0.0
            };

            let row = step.state * n_actions;
            if dterm_dlp != 0.0 {
                let coeff = surrogate_scale * dterm_dlp;
                for v in 0..n_actions {
                    if probs[v] == 0.0 && v != step.action {
                        continue;
                    }
                    let indicator = if v == step.action { 1.0 } else { 0.0 };
                    grad[row + v] += coeff * (indicator - probs[v]);
                }
            }

            match config.kl_estimator {
                KlEstimator::Exact => {
                    let ref_probs = ref_policy.probs(step.state);
                    let mut kl = 0.0;
                    for v in 0..n_actions {
                        if probs[v] == 0.0 {
                            continue;
                        }
                        if ref_probs[v] == 0.0 {
                            return Err(GrpoError::InfiniteKl);
                        }
                        kl += probs[v] * (probs[v] / ref_probs[v]).ln();
                    }
                    for v in 0..n_actions {
                        if probs[v] == 0.0 {
                            continue;
                        }
                        let dkl_dw = probs[v] * ((probs[v] / ref_probs[v]).ln() - kl);
                        grad[row + v] -= kl_scale * dkl_dw;
                    }
                }
                KlEstimator::SampledK3 => {
                    let lp_ref = ref_policy.logp(step.state, step.action);
                    let d = lp_ref - lp_new;
                    let dkl_dlp = 1.0 - d.exp();
                    for v in 0..n_actions {
                        if probs[v] == 0.0 && v != step.action {
                            continue;
                        }
                        let indicator = if v == step.action { 1.0 } else { 0.0 };
                        grad[row + v] -= kl_scale * dkl_dlp * (indicator - probs[v]);
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Central finite differences of [`grpo_objective`] over every weight.
/// Test-support oracle; quadratic cost in the parameter count.
pub fn finite_difference_grad(
    policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    episodes: &[Episode],
    config: &GrpoConfig,
    step_size: f64,
) -> Result<Vec<f64>, GrpoError> {
    let mut grad = vec![0.0; policy.param_count()];
    let mut work = policy.clone();
    for p in 0..policy.param_count() {
        let original = work.weights()[p];
        work.weights_mut()[p] = original + step_size;
        let plus = grpo_objective(&work, ref_policy, episodes, config)?;
        work.weights_mut()[p] = original - step_size;
        let minus = grpo_objective(&work, ref_policy, episodes, config)?;
        work.weights_mut()[p] = original;
        grad[p] = (plus - minus) / (2.0 * step_size);
    }
    Ok(grad)
}

/// True when some generated token's ratio sits within `margin` of a clip
/// boundary, where the objective is non-differentiable and finite
/// differences are unreliable.
pub fn near_clip_kink(
    policy: &ToyPolicy,
    episodes: &[Episode],
    eps_clip: f64,
    margin: f64,
) -> bool {
    for episode in episodes {
        for token in &episode.tokens {
            let TokenRecord::Generated(step) = token else {
                continue;
            };
            let ratio = (policy.logp(step.state, step.action) - step.logp_old).exp();
            if (ratio - (1.0 - eps_clip)).abs() < margin
                || (ratio - (1.0 + eps_clip)).abs() < margin
            {
                return true;
            }
        }
    }
    false
}
