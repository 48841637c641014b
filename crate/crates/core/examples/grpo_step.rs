//! One GRPO step by hand: sample a group, score it, normalize, update.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvr_core::datagen::generate_with;
use tvr_core::grpo::{compute_advantages, policy_update, sample_group, GrpoConfig, ToyPolicy};
use tvr_core::reward::score_prediction;
use tvr_core::{AttributeVocab, RewardConfig, ViewTag};

fn main() {
    let vocab = AttributeVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = generate_with(&vocab, "g", 2, 2, ViewTag::Center, &mut rng).unwrap();
    let cfg = GrpoConfig::default();
    let reward = RewardConfig::default();

    let mut policy = ToyPolicy::for_instance(&inst, cfg.max_len, &vocab);
    let reference = policy.clone();
    println!(
        "exact-answer probability {:.5}",
        policy.exact_answer_probability(&inst).unwrap()
    );

    for step in 0..3 {
        let mut group = sample_group(&policy, &reference, &cfg, &mut rng);
        for g in 0..group.len() {
            group.rewards[g] = score_prediction(&group.responses[g], 1.0, &inst, &reward, &vocab)
                .unwrap()
                .r_total;
        }
        group.advantages = compute_advantages(&group.rewards, &cfg).unwrap();
        println!("step {step}");
        for g in 0..group.len() {
            println!(
                "  len {} reward {:>5} advantage {:>6.3}",
                group.responses[g].len(),
                group.rewards[g],
                group.advantages[g]
            );
        }
        let (next, grad) = policy_update(&policy, &group, &cfg).unwrap();
        println!(
            "  objective {:.4}, kl {:.4}, grad norm {:.4}",
            grad.objective,
            grad.kl,
            grad.norm()
        );
        policy = next;
    }
    println!(
        "exact-answer probability {:.5}",
        policy.exact_answer_probability(&inst).unwrap()
    );
}
