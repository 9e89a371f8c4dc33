//! Toy training loop: sample a group of rollouts per case, score them,
//! ascend the analytic gradient, and log the learning curve.

use super::grad::{assemble_group_sample, policy_grad, Episode};
use super::policy::ToyPolicy;
use super::toy_env::{run_episode, ToyEnv, ToyJudge};
use super::{grpo_loss, GrpoConfig, GrpoError, KlEstimator};
use crate::clients::mock::CachingJudge;
use crate::retrieval::SourceRegistry;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTrainConfig {
    pub steps: usize,
    pub lambda_r: f64,
    pub seed: u64,
    /// Tabular-policy step size. The GRPO config's own learning rate targets
    /// full-model fine-tuning and is far too small for a logit table.
    pub learning_rate: f64,
    pub grpo: GrpoConfig,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lambda_r: crate::reward::DEFAULT_LAMBDA_R,
            seed: 7,
            learning_rate: 1.0,
            grpo: GrpoConfig {
                kl_estimator: KlEstimator::Exact,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_outcome: f64,
    pub mean_process: f64,
    pub objective: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub steps: Vec<StepMetrics>,
}

impl TrainingCurve {
    /// Mean reward over the trailing `window` steps ending at `step`
    /// (inclusive).
    pub fn trailing_mean_reward(&self, step: usize, window: usize) -> f64 {
        let end = self.steps.iter().take_while(|m| m.step <= step).count();
        let start = end.saturating_sub(window);
        let slice = &self.steps[start..end];
        if slice.is_empty() {
            return 0.0;
        }
        slice.iter().map(|m| m.mean_reward).sum::<f64>() / slice.len() as f64
    }

    /// First step whose trailing-window mean reward reaches `threshold`.
    pub fn first_step_reaching(&self, threshold: f64, window: usize) -> Option<usize> {
        self.steps
            .iter()
            .map(|m| m.step)
            .find(|&s| self.trailing_mean_reward(s, window) >= threshold)
    }

    pub fn final_trailing_mean(&self, window: usize) -> f64 {
        match self.steps.last() {
            Some(last) => self.trailing_mean_reward(last.step, window),
            None => 0.0,
        }
    }

    /// Appends rows to a tabular text file (CSV with a header).
    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), GrpoError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "step,mean_reward,mean_outcome,mean_process,objective,kl,clip_fraction"
        )?;
        for m in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.step, m.mean_reward, m.mean_outcome, m.mean_process, m.objective, m.kl,
                m.clip_fraction
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs GRPO on the toy routing task.
///
/// Each step samples one case, rolls out a group of trajectories with the
/// current policy, computes rewards and the analytic gradient, and takes one
/// ascent step. The sampling policy doubles as the old policy (refreshed
/// every step); the reference policy is the frozen initial one.
pub fn train_toy(
    env: &ToyEnv,
    policy: &mut ToyPolicy,
    registry: &SourceRegistry,
    config: &ToyTrainConfig,
) -> Result<TrainingCurve, GrpoError> {
    let env = ToyEnv {
        lambda_r: config.lambda_r,
        ..env.clone()
    };
    let ref_policy = policy.clone();
    let judge = CachingJudge::new(ToyJudge);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = TrainingCurve::default();

    for step in 0..config.steps {
        let case = env.sample_case(&mut rng);
        let mut episodes: Vec<Episode> = Vec::with_capacity(config.grpo.group_size);
        let mut outcome_sum = 0.0;
        let mut process_sum = 0.0;
        for _ in 0..config.grpo.group_size {
            let outcome = run_episode(&env, policy, registry, &judge, case, rng.gen())?;
            outcome_sum += f64::from(outcome.score.breakdown.outcome);
            process_sum += outcome.score.breakdown.process;
            episodes.push(outcome.episode);
        }

        let group = assemble_group_sample(policy, &ref_policy, &episodes)?;
        let breakdown = grpo_loss(&group, &config.grpo)?;
        let grad = policy_grad(policy, &ref_policy, &episodes, &config.grpo)?;
        for (w, g) in policy.weights_mut().iter_mut().zip(&grad) {
            *w += config.learning_rate * g;
        }
        if !policy.all_finite() {
            return Err(GrpoError::Diverged(step));
        }

        let g = config.grpo.group_size as f64;
        curve.steps.push(StepMetrics {
            step,
            mean_reward: episodes.iter().map(|e| e.reward).sum::<f64>() / g,
            mean_outcome: outcome_sum / g,
            mean_process: process_sum / g,
            objective: breakdown.objective,
            kl: breakdown.kl,
            clip_fraction: breakdown.clip_fraction,
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_training_run_improves_over_baseline() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let mut policy = env.fresh_policy();
        let config = ToyTrainConfig {
            steps: 120,
            seed: 11,
            ..Default::default()
        };
        let curve = train_toy(&env, &mut policy, &registry, &config).unwrap();
        assert_eq!(curve.steps.len(), 120);
        let early = curve.trailing_mean_reward(19, 20);
        let late = curve.final_trailing_mean(20);
        assert!(
            late > early + 0.15,
            "no learning: early {early:.3}, late {late:.3}"
        );
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let env = ToyEnv::default();
        let registry = env.build_registry().unwrap();
        let config = ToyTrainConfig {
            steps: 25,
            seed: 3,
            ..Default::default()
        };
        let run = || {
            let mut policy = env.fresh_policy();
            train_toy(&env, &mut policy, &registry, &config)
                .unwrap()
                .steps
                .iter()
                .map(|m| m.mean_reward)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn curve_csv_round_trips_row_count() {
        let curve = TrainingCurve {
            steps: vec![StepMetrics {
                step: 0,
                mean_reward: 0.25,
                mean_outcome: 0.25,
                mean_process: 0.25,
                objective: 0.0,
                kl: 0.0,
                clip_fraction: 0.0,
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        curve.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("step,mean_reward"));
    }
}
