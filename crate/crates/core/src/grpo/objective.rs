//! Group-normalized advantages and the clipped GRPO surrogate.
//!
//! For a group of `G` responses with rewards `R_g`:
//!
//! ```text
//! A_g  = (R_g - mean(R)) / std(R)                    (population std)
//! r_g  = exp(logp_current_g - logp_old_g)
//! k3_g = exp(logp_ref_g - logp_current_g) - (logp_ref_g - logp_current_g) - 1
//! J    = 1/G * sum_g [ min(r_g A_g, clip(r_g, 1-eps, 1+eps) A_g) - beta k3_g ]
//! ```

use super::policy::{Choice, ToyPolicy};
use super::{GrpoConfig, GrpoError};
use crate::scene::TransformationSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoGroup {
    pub choices: Vec<Choice>,
    pub responses: Vec<TransformationSequence>,
    pub rewards: Vec<f64>,
    pub logp_current: Vec<f64>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GrpoGroup {
    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

/// Draws `cfg.group_size` answers; rewards and advantages are left zeroed.
pub fn sample_group(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    cfg: &GrpoConfig,
    rng: &mut impl rand::Rng,
) -> GrpoGroup {
    let choices: Vec<Choice> = (0..cfg.group_size).map(|_| policy.sample(rng)).collect();
    let logp_old: Vec<f64> = choices.iter().map(|c| policy.log_prob(c)).collect();
    let g = choices.len();
    GrpoGroup {
        responses: choices.iter().map(|c| policy.materialize(c)).collect(),
        logp_ref: choices.iter().map(|c| reference.log_prob(c)).collect(),
        logp_current: logp_old.clone(),
        logp_old,
        rewards: vec![0.0; g],
        advantages: vec![0.0; g],
        choices,
    }
}

pub fn compute_advantages(rewards: &[f64], cfg: &GrpoConfig) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.sqrt();
    if std <= cfg.sigma_floor {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Non-negative `k3` estimate of KL(current || reference) for one sample.
pub fn k3(logp_current: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_current;
    d.exp() - d - 1.0
}

fn check_finite(group: &GrpoGroup) -> Result<(), GrpoError> {
    let all = group
        .logp_current
        .iter()
        .chain(&group.logp_old)
        .chain(&group.logp_ref);
    if all.clone().any(|x| !x.is_finite()) {
        return Err(GrpoError::NonFiniteLogProb);
    }
    Ok(())
}

fn clip(r: f64, eps: f64) -> f64 {
    r.clamp(1.0 - eps, 1.0 + eps)
}

/// Surrogate value of one sample, and whether the unclipped branch is active.
fn surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = clip(ratio, eps) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

pub fn grpo_objective(group: &GrpoGroup, cfg: &GrpoConfig) -> Result<f64, GrpoError> {
    check_finite(group)?;
    let g = group.len() as f64;
    let total: f64 = (0..group.len())
        .map(|i| {
            let ratio = (group.logp_current[i] - group.logp_old[i]).exp();
            let (s, _) = surrogate(ratio, group.advantages[i], cfg.clip_epsilon);
            s - cfg.kl_beta * k3(group.logp_current[i], group.logp_ref[i])
        })
        .sum();
    Ok(total / g)
}

/// Mean `k3` over the group.
pub fn kl_estimate(group: &GrpoGroup) -> f64 {
    let g = group.len().max(1) as f64;
    (0..group.len())
        .map(|i| k3(group.logp_current[i], group.logp_ref[i]))
        .sum::<f64>()
        / g
}

/// The objective with `logp_current` recomputed under `policy`.
pub fn objective_at(
    policy: &ToyPolicy,
    group: &GrpoGroup,
    cfg: &GrpoConfig,
) -> Result<f64, GrpoError> {
    let mut g = group.clone();
    g.logp_current = g.choices.iter().map(|c| policy.log_prob(c)).collect();
    grpo_objective(&g, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub length: Vec<f64>,
    pub triplet: Vec<f64>,
    pub objective: f64,
    pub kl: f64,
}

impl PolicyGradient {
    pub fn norm(&self) -> f64 {
        self.length
            .iter()
            .chain(&self.triplet)
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

/// Analytic gradient of [`objective_at`] with respect to both logit blocks.
pub fn policy_gradient(
    policy: &ToyPolicy,
    group: &GrpoGroup,
    cfg: &GrpoConfig,
) -> Result<PolicyGradient, GrpoError> {
    let mut g = group.clone();
    g.logp_current = g.choices.iter().map(|c| policy.log_prob(c)).collect();
    check_finite(&g)?;
    let n = g.len() as f64;
    let mut length = vec![0.0; policy.length_logits.len()];
    let mut triplet = vec![0.0; policy.triplet_logits.len()];
    for i in 0..g.len() {
        let lc = g.logp_current[i];
        let ratio = (lc - g.logp_old[i]).exp();
        let (_, active) = surrogate(ratio, g.advantages[i], cfg.clip_epsilon);
        // d/d(lc) of the surrogate and of the k3 penalty
        let d_surrogate = if active { ratio * g.advantages[i] } else { 0.0 };
        let d_k3 = 1.0 - (g.logp_ref[i] - lc).exp();
        let weight = (d_surrogate - cfg.kl_beta * d_k3) / n;
        if weight != 0.0 {
            policy.accumulate_log_prob_grad(&g.choices[i], weight, &mut length, &mut triplet);
        }
    }
    Ok(PolicyGradient {
        objective: grpo_objective(&g, cfg)?,
        kl: kl_estimate(&g),
        length,
        triplet,
    })
}

/// One gradient-ascent step on the objective. The step is rescaled when the
/// gradient's L2 norm exceeds `cfg.max_grad_norm` (0 disables this); the
/// returned gradient is the unscaled one.
pub fn policy_update(
    policy: &ToyPolicy,
    group: &GrpoGroup,
    cfg: &GrpoConfig,
) -> Result<(ToyPolicy, PolicyGradient), GrpoError> {
    let grad = policy_gradient(policy, group, cfg)?;
    let norm = grad.norm();
    let mut step = cfg.learning_rate;
    if cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm {
        step *= cfg.max_grad_norm / norm;
    }
    let mut next = policy.clone();
    for (w, d) in next.length_logits.iter_mut().zip(&grad.length) {
        *w += step * d;
    }
    for (w, d) in next.triplet_logits.iter_mut().zip(&grad.triplet) {
        *w += step * d;
    }
    Ok((next, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::AttributeVocab;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> GrpoConfig {
        GrpoConfig::default()
    }

    #[test]
    fn constant_rewards_give_zero_advantages() {
        assert_eq!(compute_advantages(&[4.5; 4], &cfg()).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn two_element_advantages() {
        assert_eq!(
            compute_advantages(&[0.0, 10.0], &cfg()).unwrap(),
            vec![-1.0, 1.0]
        );
    }

    #[test]
    fn three_element_advantages() {
        // mean 2, population sigma sqrt(2/3)
        let a = compute_advantages(&[1.0, 2.0, 3.0], &cfg()).unwrap();
        let s = (2.0f64 / 3.0).sqrt();
        let expect = [-1.0 / s, 0.0, 1.0 / s];
        for (x, y) in a.iter().zip(expect) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn group_too_small() {
        assert_eq!(
            compute_advantages(&[1.0], &cfg()),
            Err(GrpoError::GroupTooSmall(1))
        );
    }

    fn random_group(rng: &mut ChaCha8Rng, policy: &ToyPolicy, g: usize) -> GrpoGroup {
        let c = GrpoConfig {
            group_size: g,
            ..cfg()
        };
        let mut group = sample_group(policy, policy, &c, rng);
        group.rewards = (0..g).map(|_| rng.gen_range(-5.0..5.0)).collect();
        group.advantages = compute_advantages(&group.rewards, &c).unwrap();
        group
    }

    #[test]
    fn identity_policy_objective_is_zero() {
        let v = AttributeVocab::default();
        let p = ToyPolicy::uniform(2, 4, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let group = random_group(&mut rng, &p, 8);
        assert!(grpo_objective(&group, &cfg()).unwrap().abs() < 1e-12);
        assert_eq!(kl_estimate(&group), 0.0);
    }

    fn single(ratio: f64, adv: f64) -> GrpoGroup {
        GrpoGroup {
            choices: vec![Choice::default()],
            responses: vec![vec![]],
            rewards: vec![0.0],
            logp_current: vec![ratio.ln()],
            logp_old: vec![0.0],
            logp_ref: vec![ratio.ln()],
            advantages: vec![adv],
        }
    }

    #[test]
    fn clipped_branch_caps_positive_advantage() {
        let c = cfg();
        let eps = c.clip_epsilon;
        let j = grpo_objective(&single(1.0 + 2.0 * eps, 1.7), &c).unwrap();
        assert!((j - (1.0 + eps) * 1.7).abs() < 1e-12);
        // negative advantage with a large ratio is not clipped
        let j = grpo_objective(&single(1.0 + 2.0 * eps, -1.7), &c).unwrap();
        assert!((j - (1.0 + 2.0 * eps) * -1.7).abs() < 1e-12);
        // negative advantage with a small ratio is clipped at 1 - eps
        let j = grpo_objective(&single(1.0 - 2.0 * eps, -1.7), &c).unwrap();
        assert!((j - (1.0 - eps) * -1.7).abs() < 1e-12);
    }

    #[test]
    fn inactive_clip_without_kl_is_ratio_weighted_mean() {
        let c = GrpoConfig {
            kl_beta: 0.0,
            ..cfg()
        };
        let ratios = [0.9, 1.05, 1.15, 0.85];
        let advs = [0.3, -1.2, 0.8, 0.1];
        let group = GrpoGroup {
            choices: vec![Choice::default(); 4],
            responses: vec![vec![]; 4],
            rewards: vec![0.0; 4],
            logp_current: ratios.iter().map(|r: &f64| r.ln()).collect(),
            logp_old: vec![0.0; 4],
            logp_ref: vec![-1.0; 4],
            advantages: advs.to_vec(),
        };
        let expect: f64 = ratios.iter().zip(advs).map(|(r, a)| r * a).sum::<f64>() / 4.0;
        assert!((grpo_objective(&group, &c).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn non_finite_log_prob_is_rejected() {
        let mut g = single(1.0, 1.0);
        g.logp_ref[0] = f64::NAN;
        assert_eq!(grpo_objective(&g, &cfg()), Err(GrpoError::NonFiniteLogProb));
    }

    #[test]
    fn k3_is_non_negative() {
        for a in [-20.0, -3.0, -0.1, 0.0, 0.4, 5.0] {
            for b in [-20.0, -1.0, 0.0, 2.0] {
                assert!(k3(a, b) >= 0.0);
            }
        }
        assert_eq!(k3(-1.3, -1.3), 0.0);
    }

    #[test]
    fn zero_advantage_and_beta_leaves_policy_unchanged() {
        let v = AttributeVocab::default();
        let p = ToyPolicy::uniform(2, 4, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut group = random_group(&mut rng, &p, 6);
        group.advantages = vec![0.0; 6];
        let c = GrpoConfig {
            kl_beta: 0.0,
            ..cfg()
        };
        let (next, _) = policy_update(&p, &group, &c).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn update_raises_probability_of_favoured_answer() {
        let v = AttributeVocab::default();
        let p = ToyPolicy::uniform(1, 3, &v);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut group = random_group(&mut rng, &p, 8);
        group.rewards = vec![0.0; 8];
        group.rewards[3] = 1.0;
        group.advantages = compute_advantages(&group.rewards, &cfg()).unwrap();
        let (next, _) = policy_update(&p, &group, &cfg()).unwrap();
        assert!(next.log_prob(&group.choices[3]) > p.log_prob(&group.choices[3]));
    }
}
