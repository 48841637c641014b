//! Paired-seed comparison of the tiered reward against the binary one on
//! 3-object instances with two changes.
//!
//! cargo run --release --example dense_vs_sparse -- [iterations] [seeds]

use tvr_core::grpo::{compare_variants, GrpoConfig};
use tvr_core::{generate_dataset, AttributeVocab, GenSpec, RewardVariant};

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|s| s.parse::<usize>().expect("integer argument"));
    let iterations = args.next().unwrap_or(2000);
    let seeds = args.next().unwrap_or(10) as u64;

    let spec = GenSpec {
        count: seeds as usize,
        object_count_range: (3, 3),
        length_weights: [0.0, 1.0, 0.0, 0.0],
        ..GenSpec::default()
    };
    let data = generate_dataset(&spec).unwrap();
    let cfg = GrpoConfig {
        iterations,
        ..GrpoConfig::default()
    };
    let seeds: Vec<u64> = (0..seeds).collect();
    let cmp = compare_variants(
        &data,
        &[
            RewardVariant::Full,
            RewardVariant::WoPun,
            RewardVariant::NaiveBinary,
        ],
        &cfg,
        &seeds,
        0.9,
        &AttributeVocab::default(),
    )
    .unwrap();
    print!("{}", cmp.to_csv());

    // exact rate of each variant at full's median hitting time
    let Some(full) = cmp.variant(RewardVariant::Full) else {
        return;
    };
    let at = full.median_hitting_time as usize;
    for (run, trace) in cmp
        .runs
        .iter()
        .zip(&cmp.traces)
        .filter(|(r, _)| r.seed == 0)
    {
        let row = trace.rows.iter().rev().find(|r| r.iteration <= at).unwrap();
        println!(
            "seed 0 {:<13} exact rate at iteration {}: {:.3}",
            run.variant.name(),
            row.iteration,
            row.exact_rate
        );
    }
}
