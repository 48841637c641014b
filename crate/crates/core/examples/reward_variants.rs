//! Scores the same answers under every reward variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvr_core::datagen::generate_with;
use tvr_core::reward::score_prediction;
use tvr_core::{Attribute, AttributeVocab, RewardConfig, RewardVariant, Transformation, ViewTag};

fn main() {
    let vocab = AttributeVocab::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = generate_with(&vocab, "v", 4, 3, ViewTag::Center, &mut rng).unwrap();

    let wrong_value = |t: &Transformation| {
        let other = vocab
            .values(t.attribute)
            .iter()
            .find(|v| **v != t.value)
            .unwrap();
        Transformation::new(t.index, t.attribute, other.as_str())
    };
    let mut partial = inst.truth_seq.clone();
    partial[0] = wrong_value(&partial[0]);
    let mut padded = inst.truth_seq.clone();
    padded.push(Transformation::new(0, Attribute::Color, "purple"));
    padded.push(Transformation::new(1, Attribute::Shape, "cube"));

    let answers = [
        ("truth", inst.truth_seq.clone()),
        ("one wrong value", partial),
        ("truth minus one", inst.truth_seq[1..].to_vec()),
        ("truth plus guesses", padded),
        ("empty", Vec::new()),
    ];
    print!("{:<20}", "answer");
    for v in RewardVariant::ALL {
        print!("{:>14}", v.name());
    }
    println!();
    for (name, pred) in &answers {
        print!("{name:<20}");
        for v in RewardVariant::ALL {
            let b = score_prediction(pred, 1.0, &inst, &RewardConfig::preset(v), &vocab).unwrap();
            print!("{:>14}", b.r_acc);
        }
        println!();
    }
}
