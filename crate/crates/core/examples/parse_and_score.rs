//! Parses a raw model response and breaks down its reward.

use tvr_core::datagen::TvrInstance;
use tvr_core::{
    parse_response, score_response, Attribute, AttributeVocab, RewardConfig, Scene, SceneObject,
    Transformation, ViewTag,
};

fn object(index: usize, color: &str, shape: &str) -> SceneObject {
    SceneObject {
        index,
        color: color.into(),
        shape: shape.into(),
        size: "small".into(),
        material: "rubber".into(),
    }
}

fn main() {
    let vocab = AttributeVocab::default();
    let initial = Scene::new(
        ViewTag::Center,
        vec![
            object(0, "gray", "cube"),
            object(1, "blue", "sphere"),
            object(2, "green", "cylinder"),
        ],
    )
    .unwrap();
    let truth = vec![
        Transformation::new(0, Attribute::Color, "red"),
        Transformation::new(2, Attribute::Material, "metal"),
    ];
    let instance =
        TvrInstance::from_parts("demo", initial, truth, ViewTag::Center, &vocab).unwrap();

    let responses = [
        // exact
        r#"<think>the cube turned red and the cylinder shines</think>
<answer>[{"index":0,"attribute":"color","value":"red"},{"index":2,"attribute":"material","value":"metal"}]</answer>"#,
        // right cell, wrong value, and one missing
        r#"<think>cube changed color</think><answer>[{"index":0,"attribute":"color","value":"yellow"}]</answer>"#,
        // line format, plus a guess that contradicts the final scene
        "<think>guessing</think><answer>0, color, red\n1, shape, cube\n2, material, metal</answer>",
        // no tags at all
        "0, color, red",
    ];
    let cfg = RewardConfig::default();
    for raw in responses {
        let parsed = parse_response(raw, &vocab);
        let b = score_response(&parsed, &instance, &cfg, &vocab).unwrap();
        println!("{}", raw.lines().last().unwrap());
        println!(
            "  format {} pos {} pun {} -> acc {} total {} ({} items, {} mistaken)",
            b.r_format, b.r_pos, b.r_pun, b.r_acc, b.r_total, b.n, b.n_mis
        );
        for note in &parsed.parse_notes {
            println!("  note: {note:?}");
        }
    }
}
