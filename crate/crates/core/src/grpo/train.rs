//! Training loop, traces and paired-seed comparison of reward variants.

use super::objective::{compute_advantages, policy_update, sample_group};
use super::policy::ToyPolicy;
use super::{GrpoConfig, GrpoError};
use crate::datagen::TvrInstance;
use crate::reward::{score_prediction, RewardConfig, RewardVariant};
use crate::scene::AttributeVocab;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const TRACE_HEADER: &str =
    "iteration,mean_reward,exact_rate,mean_pred_len,objective,kl_estimate";

/// Policy state after `iteration` updates, averaged over the trained instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_reward: f64,
    pub exact_rate: f64,
    pub mean_pred_len: f64,
    /// Objective and KL estimate of the update that produced this row.
    pub objective: f64,
    pub kl_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub variant: RewardVariant,
    pub seed: u64,
    pub iterations: usize,
    /// Mean ground-truth length over the trained instances.
    pub mean_n_hat: f64,
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    /// First iteration whose exact-answer rate reaches `target`.
    pub fn hitting_time(&self, target: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.exact_rate >= target)
            .map(|r| r.iteration)
    }

    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("trace has an initial row")
    }

    pub fn max_mean_pred_len(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.mean_pred_len)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration,
                r.mean_reward,
                r.exact_rate,
                r.mean_pred_len,
                r.objective,
                r.kl_estimate
            ));
        }
        out
    }
}

struct Learner<'a> {
    instance: &'a TvrInstance,
    policy: ToyPolicy,
    reference: ToyPolicy,
    rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
}

fn reward_of(
    learner: &Learner<'_>,
    seq: &[crate::scene::Transformation],
    reward: &RewardConfig,
    vocab: &AttributeVocab,
) -> Result<f64, GrpoError> {
    // toy answers are rendered with well-formed tags, so the format reward is 1
    Ok(score_prediction(seq, 1.0, learner.instance, reward, vocab)?.r_total)
}

fn evaluate(
    learner: &mut Learner<'_>,
    reward: &RewardConfig,
    cfg: &GrpoConfig,
    vocab: &AttributeVocab,
) -> Result<(f64, f64, f64), GrpoError> {
    let exact = match learner.policy.exact_answer_probability(learner.instance) {
        Some(p) => p,
        None => learner.policy.exact_answer_rate_mc(
            learner.instance,
            vocab,
            cfg.eval_samples,
            &mut learner.eval_rng,
        ),
    };
    let mut total = 0.0;
    for _ in 0..cfg.eval_samples {
        let choice = learner.policy.sample(&mut learner.eval_rng);
        let seq = learner.policy.materialize(&choice);
        total += reward_of(learner, &seq, reward, vocab)?;
    }
    Ok((
        total / cfg.eval_samples as f64,
        exact,
        learner.policy.mean_length(),
    ))
}

/// Trains one toy policy per instance and records averaged trace rows.
///
/// Each iteration samples a group per instance, scores it under `reward`,
/// normalizes advantages within the group and takes one ascent step.
pub fn run_training(
    instances: &[TvrInstance],
    reward: &RewardConfig,
    cfg: &GrpoConfig,
    vocab: &AttributeVocab,
) -> Result<TrainingTrace, GrpoError> {
    cfg.validate()?;
    reward.validate()?;
    if instances.is_empty() {
        return Err(GrpoError::NoInstances);
    }
    let mut learners: Vec<Learner<'_>> = instances
        .iter()
        .enumerate()
        .map(|(i, instance)| {
            let policy = ToyPolicy::for_instance(instance, cfg.max_len, vocab);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(2 * i as u64);
            let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            eval_rng.set_stream(2 * i as u64 + 1);
            Learner {
                instance,
                reference: policy.clone(),
                policy,
                rng,
                eval_rng,
            }
        })
        .collect();

    let n = learners.len() as f64;
    let mut rows = Vec::new();
    let mut record = |iteration: usize,
                      learners: &mut [Learner<'_>],
                      objective: f64,
                      kl: f64|
     -> Result<(), GrpoError> {
        let (mut reward_sum, mut exact_sum, mut len_sum) = (0.0, 0.0, 0.0);
        for l in learners.iter_mut() {
            let (r, e, k) = evaluate(l, reward, cfg, vocab)?;
            reward_sum += r;
            exact_sum += e;
            len_sum += k;
        }
        rows.push(TraceRow {
            iteration,
            mean_reward: reward_sum / n,
            exact_rate: exact_sum / n,
            mean_pred_len: len_sum / n,
            objective,
            kl_estimate: kl,
        });
        Ok(())
    };

    record(0, &mut learners, 0.0, 0.0)?;
    for it in 1..=cfg.iterations {
        let (mut obj_sum, mut kl_sum) = (0.0, 0.0);
        for l in learners.iter_mut() {
            let mut group = sample_group(&l.policy, &l.reference, cfg, &mut l.rng);
            for (g, seq) in group.responses.iter().enumerate() {
                group.rewards[g] = reward_of(l, seq, reward, vocab)?;
            }
            group.advantages = compute_advantages(&group.rewards, cfg)?;
            let (next, grad) = policy_update(&l.policy, &group, cfg)?;
            l.policy = next;
            obj_sum += grad.objective;
            kl_sum += grad.kl;
        }
        if it % cfg.eval_interval == 0 || it == cfg.iterations {
            record(it, &mut learners, obj_sum / n, kl_sum / n)?;
        }
    }

    Ok(TrainingTrace {
        variant: reward.variant,
        seed: cfg.seed,
        iterations: cfg.iterations,
        mean_n_hat: instances.iter().map(|i| i.n_hat() as f64).sum::<f64>() / n,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: RewardVariant,
    pub seed: u64,
    pub sample_id: String,
    pub n_hat: usize,
    pub hitting_time: Option<usize>,
    pub final_exact_rate: f64,
    pub final_mean_pred_len: f64,
    pub max_mean_pred_len: f64,
}

impl RunSummary {
    /// Mean predicted length rose above `n_hat + 2` at some trace row.
    pub fn enumeration_drift(&self) -> bool {
        self.max_mean_pred_len > self.n_hat as f64 + 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: RewardVariant,
    pub runs: usize,
    pub hits: usize,
    /// Median hitting time, with misses counted as the iteration budget.
    pub median_hitting_time: f64,
    pub median_final_exact_rate: f64,
    pub median_final_pred_len: f64,
    pub median_max_pred_len: f64,
    pub drift_runs: usize,
    pub enumeration_drift: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub target_exact_rate: f64,
    pub budget: usize,
    pub variants: Vec<VariantSummary>,
    pub runs: Vec<RunSummary>,
    #[serde(skip)]
    pub traces: Vec<TrainingTrace>,
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

impl Comparison {
    pub fn variant(&self, v: RewardVariant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }

    pub fn runs_of(&self, v: RewardVariant) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(move |r| r.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "variant,runs,hits,median_hitting_time,median_final_exact_rate,median_final_pred_len,median_max_pred_len,drift_runs,enumeration_drift\n",
        );
        for s in &self.variants {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{:.4},{},{}\n",
                s.variant,
                s.runs,
                s.hits,
                s.median_hitting_time,
                s.median_final_exact_rate,
                s.median_final_pred_len,
                s.median_max_pred_len,
                s.drift_runs,
                s.enumeration_drift
            ));
        }
        out
    }
}

/// Trains every variant on every seed. Run `i` uses `instances[i % len]` and
/// GRPO seed `seeds[i]`, so variants are compared on identical pairs.
pub fn compare_variants(
    instances: &[TvrInstance],
    variants: &[RewardVariant],
    cfg: &GrpoConfig,
    seeds: &[u64],
    target_exact_rate: f64,
    vocab: &AttributeVocab,
) -> Result<Comparison, GrpoError> {
    if instances.is_empty() {
        return Err(GrpoError::NoInstances);
    }
    let jobs: Vec<(RewardVariant, usize)> = variants
        .iter()
        .flat_map(|&v| (0..seeds.len()).map(move |i| (v, i)))
        .collect();
    let results: Vec<(RunSummary, TrainingTrace)> = jobs
        .par_iter()
        .map(|&(variant, i)| {
            let instance = &instances[i % instances.len()];
            let run_cfg = GrpoConfig {
                seed: seeds[i],
                ..cfg.clone()
            };
            let trace = run_training(
                std::slice::from_ref(instance),
                &RewardConfig::preset(variant),
                &run_cfg,
                vocab,
            )?;
            let last = trace.final_row();
            let summary = RunSummary {
                variant,
                seed: seeds[i],
                sample_id: instance.sample_id.clone(),
                n_hat: instance.n_hat(),
                hitting_time: trace.hitting_time(target_exact_rate),
                final_exact_rate: last.exact_rate,
                final_mean_pred_len: last.mean_pred_len,
                max_mean_pred_len: trace.max_mean_pred_len(),
            };
            Ok((summary, trace))
        })
        .collect::<Result<_, GrpoError>>()?;
    let (runs, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let variants = variants
        .iter()
        .map(|&v| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.variant == v).collect();
            let mut hit: Vec<f64> = mine
                .iter()
                .map(|r| r.hitting_time.unwrap_or(cfg.iterations) as f64)
                .collect();
            let mut exact: Vec<f64> = mine.iter().map(|r| r.final_exact_rate).collect();
            let mut len: Vec<f64> = mine.iter().map(|r| r.final_mean_pred_len).collect();
            let mut max_len: Vec<f64> = mine.iter().map(|r| r.max_mean_pred_len).collect();
            let drift_runs = mine.iter().filter(|r| r.enumeration_drift()).count();
            VariantSummary {
                variant: v,
                runs: mine.len(),
                hits: mine.iter().filter(|r| r.hitting_time.is_some()).count(),
                median_hitting_time: median(&mut hit),
                median_final_exact_rate: median(&mut exact),
                median_final_pred_len: median(&mut len),
                median_max_pred_len: median(&mut max_len),
                drift_runs,
                enumeration_drift: drift_runs > 0,
            }
        })
        .collect();

    Ok(Comparison {
        target_exact_rate,
        budget: cfg.iterations,
        variants,
        runs,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_with;
    use crate::scene::ViewTag;

    fn instance(objects: usize, length: usize, seed: u64) -> TvrInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_with(
            &AttributeVocab::default(),
            "t",
            objects,
            length,
            ViewTag::Center,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn zero_iterations_yields_initial_row_only() {
        let cfg = GrpoConfig {
            iterations: 0,
            ..GrpoConfig::default()
        };
        let trace = run_training(
            &[instance(3, 2, 0)],
            &RewardConfig::default(),
            &cfg,
            &AttributeVocab::default(),
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].iteration, 0);
        assert!((trace.rows[0].mean_pred_len - 3.0).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = GrpoConfig {
            iterations: 60,
            seed: 4,
            ..GrpoConfig::default()
        };
        let data = [instance(3, 2, 1), instance(2, 1, 2)];
        let v = AttributeVocab::default();
        let a = run_training(&data, &RewardConfig::default(), &cfg, &v).unwrap();
        let b = run_training(&data, &RewardConfig::default(), &cfg, &v).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rows.len(), 7);
    }

    #[test]
    fn rejects_empty_instances() {
        assert_eq!(
            run_training(
                &[],
                &RewardConfig::default(),
                &GrpoConfig::default(),
                &AttributeVocab::default()
            ),
            Err(GrpoError::NoInstances)
        );
    }

    #[test]
    fn dense_reward_learns_single_object_instance() {
        // probability of the exact answer rises after burn-in in at least 9 of 10 seeds
        let v = AttributeVocab::default();
        let inst = instance(1, 1, 3);
        let mut rising = 0;
        for seed in 0..10 {
            let cfg = GrpoConfig {
                iterations: 400,
                seed,
                eval_interval: 50,
                ..GrpoConfig::default()
            };
            let trace = run_training(
                std::slice::from_ref(&inst),
                &RewardConfig::default(),
                &cfg,
                &v,
            )
            .unwrap();
            let rates: Vec<f64> = trace.rows.iter().map(|r| r.exact_rate).collect();
            let after_burn_in = &rates[2..];
            if after_burn_in.windows(2).all(|w| w[1] >= w[0]) && rates.last() > rates.first() {
                rising += 1;
            }
        }
        assert!(rising >= 9, "{rising}/10 seeds rose monotonically");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
