//! A small differentiable categorical policy: one logit row per context
//! state, softmax over a finite action vocabulary, optional per-state legal
//! action masks. Small enough that distributions, KL terms, and gradients
//! are all exact.

use super::GrpoError;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    n_states: usize,
    n_actions: usize,
    /// Row-major `n_states x n_actions` logits.
    weights: Vec<f64>,
    /// Per-state legal actions; `None` means every action is legal in every
    /// state.
    masks: Option<Vec<Vec<bool>>>,
}

impl ToyPolicy {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        assert!(n_states > 0 && n_actions > 0);
        assert!(n_actions <= 64, "action vocabulary is capped at 64");
        Self {
            n_states,
            n_actions,
            weights: vec![0.0; n_states * n_actions],
            masks: None,
        }
    }

    pub fn with_masks(mut self, masks: Vec<Vec<bool>>) -> Self {
        assert_eq!(masks.len(), self.n_states);
        for (state, mask) in masks.iter().enumerate() {
            assert_eq!(mask.len(), self.n_actions);
            assert!(
                mask.iter().any(|&m| m),
                "state {state} has no legal actions"
            );
        }
        self.masks = Some(masks);
        self
    }

    pub fn from_weights(n_states: usize, n_actions: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            weights,
            masks: None,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn masks(&self) -> Option<&Vec<Vec<bool>>> {
        self.masks.as_ref()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param(&self, state: usize, action: usize) -> f64 {
        self.weights[state * self.n_actions + action]
    }

    pub fn param_mut(&mut self, state: usize, action: usize) -> &mut f64 {
        &mut self.weights[state * self.n_actions + action]
    }

    pub fn is_legal(&self, state: usize, action: usize) -> bool {
        match &self.masks {
            Some(masks) => masks[state][action],
            None => true,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    fn logits(&self, state: usize) -> &[f64] {
        &self.weights[state * self.n_actions..(state + 1) * self.n_actions]
    }

    /// Softmax over the state's legal actions; illegal actions get exactly
    /// zero probability. Rows sum to 1 within 1e-12.
    pub fn probs(&self, state: usize) -> Vec<f64> {
        let logits = self.logits(state);
        let mut max = f64::NEG_INFINITY;
        for (a, &l) in logits.iter().enumerate() {
            if self.is_legal(state, a) && l > max {
                max = l;
            }
        }
        let mut probs = vec![0.0; self.n_actions];
        let mut total = 0.0;
        for (a, &l) in logits.iter().enumerate() {
            if self.is_legal(state, a) {
                let e = (l - max).exp();
                probs[a] = e;
                total += e;
            }
        }
        for p in &mut probs {
            *p /= total;
        }
        probs
    }

    pub fn logp(&self, state: usize, action: usize) -> f64 {
        self.probs(state)[action].ln()
    }

    /// Samples a legal action, returning `(action, logp)`.
    pub fn sample(&self, state: usize, rng: &mut impl Rng) -> (usize, f64) {
        let probs = self.probs(state);
        let draw: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = None;
        for (a, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            acc += p;
            if draw < acc {
                chosen = Some(a);
                break;
            }
        }
        // Float undershoot can leave draw >= acc; take the last legal action.
        let action = chosen.unwrap_or_else(|| {
            probs
                .iter()
                .rposition(|&p| p > 0.0)
                .expect("state has legal actions")
        });
        (action, probs[action].ln())
    }

    /// Exact KL between this policy's and `other`'s distributions at `state`.
    pub fn kl_at_state(&self, state: usize, other: &ToyPolicy) -> Result<f64, GrpoError> {
        super::kl_per_token(&self.probs(state), &other.probs(state))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), GrpoError> {
        std::fs::write(path, serde_json::to_vec_pretty(self).unwrap())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, GrpoError> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| GrpoError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    }
}
