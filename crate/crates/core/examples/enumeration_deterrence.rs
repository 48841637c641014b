//! Answering with every possible triplet earns all full matches, but the
//! inconsistency punishment makes it worse than the plain truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvr_core::datagen::generate_with;
use tvr_core::grpo::TripletSpace;
use tvr_core::reward::score_prediction;
use tvr_core::{AttributeVocab, RewardConfig, RewardVariant, ViewTag};

fn main() {
    let vocab = AttributeVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = generate_with(&vocab, "e", 2, 2, ViewTag::Center, &mut rng).unwrap();
    let everything = TripletSpace::new(inst.object_count(), &vocab).triplets;
    println!(
        "truth has {} items, enumeration has {}",
        inst.n_hat(),
        everything.len()
    );
    for v in [
        RewardVariant::Full,
        RewardVariant::WoUp,
        RewardVariant::WoPun,
        RewardVariant::AbsCountPun,
    ] {
        let cfg = RewardConfig::preset(v);
        let truth = score_prediction(&inst.truth_seq, 1.0, &inst, &cfg, &vocab).unwrap();
        let all = score_prediction(&everything, 1.0, &inst, &cfg, &vocab).unwrap();
        println!(
            "{:<14} truth {:>6}  enumerate {:>7} (pos {}, pun {})",
            v.name(),
            truth.r_acc,
            all.r_acc,
            all.r_pos,
            all.r_pun
        );
    }
}
