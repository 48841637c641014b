//! Generates a small dataset, prints one instance and writes JSONL.
//!
//! cargo run --example generate_dataset -- [count] [out.jsonl]

use tvr_core::datagen::{generate_dataset, write_dataset, GenSpec};
use tvr_core::metrics::BUCKETS;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let count = args.next().map(|s| s.parse()).transpose()?.unwrap_or(24);
    let out = args.next().unwrap_or_else(|| "generated.jsonl".into());

    let spec = GenSpec {
        count,
        view_mix: 0.25,
        seed: 42,
        ..GenSpec::default()
    };
    let data = generate_dataset(&spec)?;

    let first = &data[0];
    println!(
        "{}: {} objects, views {:?}",
        first.sample_id,
        first.object_count(),
        first.view_pair
    );
    for t in &first.truth_seq {
        println!("  object {} {} -> {}", t.index, t.attribute.name(), t.value);
    }

    let mut lengths = [0usize; 4];
    let mut buckets = [0usize; 4];
    for inst in &data {
        lengths[inst.n_hat() - 1] += 1;
        let b = BUCKETS
            .iter()
            .position(|&(lo, hi)| (lo..=hi).contains(&inst.object_count()))
            .unwrap();
        buckets[b] += 1;
    }
    let ood = data.iter().filter(|i| !i.is_in_distribution()).count();
    println!("lengths 1-4: {lengths:?}, object buckets: {buckets:?}, OOD: {ood}");

    write_dataset(&data, out.as_ref())?;
    println!("wrote {} instances to {out}", data.len());
    Ok(())
}
