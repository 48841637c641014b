//! Evaluates a simulated noisy model and prints the metric table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvr_core::{
    aggregate, evaluate_sample, generate_dataset, AttributeVocab, GenSpec, ParsedResponse,
    Transformation,
};

fn main() {
    let vocab = AttributeVocab::default();
    let spec = GenSpec {
        count: 450,
        view_mix: 0.5,
        seed: 1,
        ..GenSpec::default()
    };
    let data = generate_dataset(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // keeps each truth item with probability 0.8, and corrupts a value otherwise
    let outcomes: Vec<_> = data
        .iter()
        .map(|inst| {
            let items: Vec<Transformation> = inst
                .truth_seq
                .iter()
                .map(|t| {
                    if rng.gen_bool(0.8) {
                        return t.clone();
                    }
                    let values = vocab.values(t.attribute);
                    Transformation::new(
                        t.index,
                        t.attribute,
                        values[rng.gen_range(0..values.len())].as_str(),
                    )
                })
                .collect();
            evaluate_sample(inst, &ParsedResponse::well_formed(items), &vocab)
        })
        .collect();
    let report = aggregate(&outcomes).unwrap();
    print!("{}", report.to_csv());
    println!("NDiff over predicted counts: {:.3}", report.mean_ndiff_pred);
}
