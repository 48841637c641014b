//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};
use tvr_core::datagen::TvrInstance;
use tvr_core::{Attribute, AttributeVocab, Scene, SceneObject, Transformation, ViewTag};

pub fn t(index: usize, attribute: Attribute, value: &str) -> Transformation {
    Transformation::new(index, attribute, value)
}

/// Tier award of one pair, written out directly from the tier table.
pub fn pair_award(
    p: &Transformation,
    q: &Transformation,
    index_tier: bool,
    attr_tier: bool,
) -> f64 {
    if p.index != q.index {
        0.0
    } else if p.attribute == q.attribute && p.value == q.value {
        5.0
    } else if p.attribute == q.attribute && attr_tier {
        1.5
    } else if index_tier {
        0.5
    } else {
        0.0
    }
}

/// Best one-to-one assignment value by trying every partial injection.
pub fn brute_force_r_pos(
    pred: &[Transformation],
    truth: &[Transformation],
    index_tier: bool,
    attr_tier: bool,
) -> f64 {
    fn go(
        i: usize,
        used: &mut Vec<bool>,
        pred: &[Transformation],
        truth: &[Transformation],
        it: bool,
        at: bool,
    ) -> f64 {
        if i == pred.len() {
            return 0.0;
        }
        let mut best = go(i + 1, used, pred, truth, it, at);
        for j in 0..truth.len() {
            let w = pair_award(&pred[i], &truth[j], it, at);
            if !used[j] && w > 0.0 {
                used[j] = true;
                best = best.max(w + go(i + 1, used, pred, truth, it, at));
                used[j] = false;
            }
        }
        best
    }
    go(
        0,
        &mut vec![false; truth.len()],
        pred,
        truth,
        index_tier,
        attr_tier,
    )
}

/// Predictions that are off-scene or disagree with the final scene.
pub fn count_mistaken(pred: &[Transformation], truth_final: &Scene) -> usize {
    pred.iter()
        .filter(|p| match truth_final.objects.get(p.index) {
            None => true,
            Some(o) => o.get(p.attribute) != p.value,
        })
        .count()
}

fn gray(i: usize) -> SceneObject {
    SceneObject {
        index: i,
        color: "gray".into(),
        shape: "cube".into(),
        size: "small".into(),
        material: "rubber".into(),
    }
}

/// Eight objects; object 5 is medium and object 7 is a sphere. The truth
/// recolors object 2 red and makes object 5 large.
pub fn worked_instance() -> TvrInstance {
    let mut objects: Vec<_> = (0..8).map(gray).collect();
    objects[5].size = "medium".into();
    objects[7].shape = "sphere".into();
    let initial = Scene::new(ViewTag::Center, objects).unwrap();
    let truth = vec![
        t(2, Attribute::Color, "red"),
        t(5, Attribute::Size, "large"),
    ];
    TvrInstance::from_parts(
        "worked",
        initial,
        truth,
        ViewTag::Center,
        &AttributeVocab::default(),
    )
    .unwrap()
}

/// One exact match, one right-cell wrong-value guess and one contradicted no-op.
pub fn worked_predictions() -> Vec<Transformation> {
    vec![
        t(5, Attribute::Size, "large"),
        t(2, Attribute::Color, "blue"),
        t(7, Attribute::Shape, "cube"),
    ]
}

pub fn tvr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tvr"))
        .current_dir(dir)
        .env("TVR_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn responses_jsonl(rows: &[(String, String)]) -> String {
    rows.iter()
        .map(|(id, text)| serde_json::json!({ "id": id, "text": text }).to_string() + "\n")
        .collect()
}

/// Largest relative error between the analytic gradient and central finite
/// differences (step `h`) over both logit blocks of a random small policy.
/// Errors are taken relative to max(|analytic|, |numeric|, 1e-6).
pub fn gradcheck(seed: u64, h: f64) -> f64 {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tvr_core::grpo::{
        compute_advantages, objective_at, policy_gradient, sample_group, GrpoConfig, ToyPolicy,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = AttributeVocab::default();
    let objects = rng.gen_range(1..=3);
    let max_len = rng.gen_range(1..=4);
    let mut policy = ToyPolicy::uniform(objects, max_len, &vocab);
    let reference = {
        let mut r = policy.clone();
        r.length_logits
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-1.0..1.0));
        r.triplet_logits
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-1.0..1.0));
        r
    };
    policy
        .length_logits
        .iter_mut()
        .for_each(|w| *w = rng.gen_range(-1.5..1.5));
    policy
        .triplet_logits
        .iter_mut()
        .for_each(|w| *w = rng.gen_range(-1.5..1.5));
    let cfg = GrpoConfig {
        group_size: rng.gen_range(2..=8),
        kl_beta: rng.gen_range(0.0..0.5),
        ..GrpoConfig::default()
    };
    let mut group = sample_group(&policy, &reference, &cfg, &mut rng);
    for g in 0..group.len() {
        group.rewards[g] = rng.gen_range(-3.0..10.0);
        // an older sampling policy puts some ratios outside the clip range
        group.logp_old[g] += rng.gen_range(-0.4..0.4);
    }
    group.advantages = compute_advantages(&group.rewards, &cfg).unwrap();

    let grad = policy_gradient(&policy, &group, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, perturb: &dyn Fn(&mut ToyPolicy, f64)| {
        let mut up = policy.clone();
        perturb(&mut up, h);
        let mut down = policy.clone();
        perturb(&mut down, -h);
        let numeric = (objective_at(&up, &group, &cfg).unwrap()
            - objective_at(&down, &group, &cfg).unwrap())
            / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    };
    for i in 0..grad.length.len() {
        check(grad.length[i], &|p, d| p.length_logits[i] += d);
    }
    for i in 0..grad.triplet.len() {
        check(grad.triplet[i], &|p, d| p.triplet_logits[i] += d);
    }
    worst
}
