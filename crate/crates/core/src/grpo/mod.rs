//! GRPO over a toy per-instance policy.
//!
//! The policy stands in for a language model: it emits answers directly as
//! transformation lists, which are scored by the rule-based verifier, turned
//! into group-normalized advantages and used for one clipped policy-gradient
//! step per sampled group. The reference policy is the initial one.

mod objective;
mod policy;
mod train;

pub use objective::{
    compute_advantages, grpo_objective, k3, kl_estimate, objective_at, policy_gradient,
    policy_update, sample_group, GrpoGroup, PolicyGradient,
};
pub use policy::{Choice, ToyPolicy, TripletSpace};
pub use train::{
    compare_variants, run_training, Comparison, RunSummary, TraceRow, TrainingTrace, VariantSummary,
};

use crate::reward::RewardError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("group of {0} responses is too small, need at least 2")]
    GroupTooSmall(usize),
    #[error("non-finite log-probability in group")]
    NonFiniteLogProb,
    #[error("invalid GRPO config: {0}")]
    InvalidConfig(String),
    #[error("no training instances")]
    NoInstances,
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    /// Cap on the L2 norm of each update step; 0 disables clipping.
    pub max_grad_norm: f64,
    /// Longest answer the toy policy can emit.
    pub max_len: usize,
    /// Iterations between trace rows.
    pub eval_interval: usize,
    /// Samples per trace row for the mean-reward estimate (and for the exact
    /// rate on scenes too large for the exact computation).
    pub eval_samples: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 0.04,
            learning_rate: 0.05,
            iterations: 2000,
            seed: 0,
            sigma_floor: 1e-8,
            max_grad_norm: 1.0,
            max_len: 6,
            eval_interval: 10,
            eval_samples: 64,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: &str| Err(GrpoError::InvalidConfig(m.to_string()));
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return bad("kl_beta must be finite and non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.sigma_floor.is_nan() || self.sigma_floor < 0.0 {
            return bad("sigma_floor must be non-negative");
        }
        if !(self.max_grad_norm >= 0.0 && self.max_grad_norm.is_finite()) {
            return bad("max_grad_norm must be finite and non-negative");
        }
        if self.max_len == 0 || self.eval_interval == 0 || self.eval_samples == 0 {
            return bad("max_len, eval_interval and eval_samples must be positive");
        }
        Ok(())
    }
}
