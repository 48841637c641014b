//! Synthetic task instances and the JSONL dataset format.
//!
//! Each instance pairs an initial scene with a non-redundant ground-truth
//! transformation sequence of length 1 to 4 and the final scene it produces.
//! A non-redundant sequence never touches the same (index, attribute) cell
//! twice and never restates the value a cell already holds, so the number of
//! changed cells always equals the sequence length.

use crate::io::write_jsonl;
use crate::scene::{
    apply_sequence, has_distinct_cells, scene_diff, Attribute, AttributeVocab, Scene, SceneError,
    SceneObject, Transformation, TransformationSequence, ViewTag, MAX_OBJECTS,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const MIN_LENGTH: usize = 1;
pub const MAX_LENGTH: usize = 4;

const PROMPT_TEMPLATE: &str = "Two images show the same scene before and after a set of changes. \
Objects in the first image: {ObjectFeature}. \
Each change sets one attribute (color, shape, size or material) of one object to a new value. \
List every change that turns the first scene into the second. \
Write your reasoning inside <think></think> and the final list inside <answer></answer> \
as a JSON array of {\"index\", \"attribute\", \"value\"} objects.";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible request: {0}")]
    InfeasibleSpec(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("sample `{sample_id}` violates {invariant}: {detail}")]
    InvariantViolation {
        sample_id: String,
        invariant: Invariant,
        detail: String,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which [`TvrInstance`] invariant a record broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    SceneShape,
    Vocabulary,
    ViewPair,
    FinalState,
    NonRedundancy,
    Length,
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Invariant::SceneShape => "scene shape",
            Invariant::Vocabulary => "vocabulary membership",
            Invariant::ViewPair => "view pair",
            Invariant::FinalState => "final state consistency",
            Invariant::NonRedundancy => "non-redundancy",
            Invariant::Length => "transformation length",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TvrInstance {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub prompt: String,
    pub view_pair: (ViewTag, ViewTag),
    pub initial: Scene,
    #[serde(rename = "final")]
    pub truth_final: Scene,
    #[serde(rename = "transformations")]
    pub truth_seq: TransformationSequence,
}

impl TvrInstance {
    /// Builds and validates an instance from an initial scene and a ground truth.
    pub fn from_parts(
        sample_id: impl Into<String>,
        initial: Scene,
        truth_seq: TransformationSequence,
        final_view: ViewTag,
        vocab: &AttributeVocab,
    ) -> Result<Self, DatasetError> {
        let (mut truth_final, _) = apply_sequence(&initial, &truth_seq, vocab);
        truth_final.view = final_view;
        let instance = TvrInstance {
            sample_id: sample_id.into(),
            prompt: render_prompt(&initial),
            view_pair: (initial.view, final_view),
            initial,
            truth_final,
            truth_seq,
        };
        instance.validate(vocab)?;
        Ok(instance)
    }

    pub fn n_hat(&self) -> usize {
        self.truth_seq.len()
    }

    pub fn object_count(&self) -> usize {
        self.initial.len()
    }

    /// In-distribution means both scenes were observed from the center.
    pub fn is_in_distribution(&self) -> bool {
        self.view_pair == (ViewTag::Center, ViewTag::Center)
    }

    pub fn validate(&self, vocab: &AttributeVocab) -> Result<(), DatasetError> {
        let violation = |invariant, detail: String| DatasetError::InvariantViolation {
            sample_id: self.sample_id.clone(),
            invariant,
            detail,
        };
        for scene in [&self.initial, &self.truth_final] {
            scene
                .check_indices()
                .map_err(|e| violation(Invariant::SceneShape, e.to_string()))?;
            scene
                .validate(vocab)
                .map_err(|e| violation(Invariant::Vocabulary, e.to_string()))?;
        }
        if self.initial.len() != self.truth_final.len() {
            return Err(violation(
                Invariant::SceneShape,
                "initial and final object counts differ".into(),
            ));
        }
        if (self.initial.view, self.truth_final.view) != self.view_pair {
            return Err(violation(
                Invariant::ViewPair,
                "scene views disagree with view_pair".into(),
            ));
        }
        if self.initial.view != ViewTag::Center {
            return Err(violation(
                Invariant::ViewPair,
                "initial scene must be observed from the center".into(),
            ));
        }
        let n = self.truth_seq.len();
        if !(MIN_LENGTH..=MAX_LENGTH).contains(&n) {
            return Err(violation(
                Invariant::Length,
                format!("{n} transformations, expected {MIN_LENGTH}..={MAX_LENGTH}"),
            ));
        }
        for t in &self.truth_seq {
            if t.index >= self.initial.len() {
                return Err(violation(
                    Invariant::SceneShape,
                    format!("transformation {t} targets a missing object"),
                ));
            }
            if !vocab.contains(t.attribute, &t.value) {
                return Err(violation(
                    Invariant::Vocabulary,
                    format!("transformation {t} uses an unknown value"),
                ));
            }
        }
        if !has_distinct_cells(&self.truth_seq) {
            return Err(violation(
                Invariant::NonRedundancy,
                "two transformations share an (index, attribute) pair".into(),
            ));
        }
        if let Some(t) = self
            .truth_seq
            .iter()
            .find(|t| self.initial.objects[t.index].get(t.attribute) == t.value)
        {
            return Err(violation(
                Invariant::NonRedundancy,
                format!("transformation {t} restates the current value"),
            ));
        }
        let (applied, _) = apply_sequence(&self.initial, &self.truth_seq, vocab);
        if !applied.same_objects(&self.truth_final) {
            return Err(violation(
                Invariant::FinalState,
                "final scene differs from applying the transformations".into(),
            ));
        }
        Ok(())
    }
}

/// Question text for an initial scene.
pub fn render_prompt(initial: &Scene) -> String {
    let features: Vec<String> = initial
        .objects
        .iter()
        .map(SceneObject::feature_string)
        .collect();
    PROMPT_TEMPLATE.replace("{ObjectFeature}", &features.join(", "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub count: usize,
    /// Inclusive range of object counts.
    pub object_count_range: (usize, usize),
    /// Relative weights of sequence lengths 1, 2, 3 and 4.
    pub length_weights: [f64; 4],
    /// Fraction of instances whose final scene is observed from the left or right.
    pub view_mix: f64,
    pub seed: u64,
    pub vocab: AttributeVocab,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            count: 450,
            object_count_range: (1, MAX_OBJECTS),
            length_weights: [1.0; 4],
            view_mix: 0.0,
            seed: 0,
            vocab: AttributeVocab::default(),
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (lo, hi) = self.object_count_range;
        if lo < 1 || hi > MAX_OBJECTS || lo > hi {
            return Err(DatasetError::InvalidSpec(format!(
                "object_count_range ({lo}, {hi}) must lie within 1..={MAX_OBJECTS}"
            )));
        }
        let w = &self.length_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(DatasetError::InvalidSpec(
                "length weights must be non-negative with a positive sum".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.view_mix) {
            return Err(DatasetError::InvalidSpec(
                "view_mix must lie in [0, 1]".into(),
            ));
        }
        self.vocab.validate()?;
        Ok(())
    }
}

/// Samples one instance: object count and length are drawn from the spec.
pub fn generate_instance(
    spec: &GenSpec,
    sample_id: impl Into<String>,
    rng: &mut impl Rng,
) -> Result<TvrInstance, DatasetError> {
    spec.validate()?;
    let (lo, hi) = spec.object_count_range;
    let objects = rng.gen_range(lo..=hi);
    let length = sample_length(&spec.length_weights, rng);
    let final_view = if rng.gen::<f64>() < spec.view_mix {
        ood_view(rng)
    } else {
        ViewTag::Center
    };
    generate_with(&spec.vocab, sample_id, objects, length, final_view, rng)
}

/// Samples one instance with a fixed object count, length and final view.
pub fn generate_with(
    vocab: &AttributeVocab,
    sample_id: impl Into<String>,
    object_count: usize,
    length: usize,
    final_view: ViewTag,
    rng: &mut impl Rng,
) -> Result<TvrInstance, DatasetError> {
    if !(1..=MAX_OBJECTS).contains(&object_count) {
        return Err(DatasetError::InvalidSpec(format!(
            "object count {object_count} outside 1..={MAX_OBJECTS}"
        )));
    }
    if !(MIN_LENGTH..=MAX_LENGTH).contains(&length) {
        return Err(DatasetError::InvalidSpec(format!(
            "length {length} outside {MIN_LENGTH}..={MAX_LENGTH}"
        )));
    }
    // cells whose attribute has at least one alternative value
    let mut cells: Vec<(usize, Attribute)> = (0..object_count)
        .flat_map(|i| Attribute::ALL.map(|a| (i, a)))
        .filter(|&(_, a)| vocab.values(a).len() > 1)
        .collect();
    if length > cells.len() {
        return Err(DatasetError::InfeasibleSpec(format!(
            "{length} transformations need distinct cells but only {} exist",
            cells.len()
        )));
    }

    let pick = |a: Attribute, rng: &mut dyn rand::RngCore| {
        vocab
            .values(a)
            .choose(rng)
            .expect("vocab is non-empty")
            .clone()
    };
    let objects = (0..object_count)
        .map(|index| SceneObject {
            index,
            color: pick(Attribute::Color, rng),
            shape: pick(Attribute::Shape, rng),
            size: pick(Attribute::Size, rng),
            material: pick(Attribute::Material, rng),
        })
        .collect();
    let initial = Scene::new(ViewTag::Center, objects)?;

    cells.shuffle(rng);
    let truth_seq = cells[..length]
        .iter()
        .map(|&(index, attribute)| {
            let current = initial.objects[index].get(attribute);
            let alternatives: Vec<&String> = vocab
                .values(attribute)
                .iter()
                .filter(|v| v.as_str() != current)
                .collect();
            let value = (*alternatives.choose(rng).expect("at least one alternative")).clone();
            Transformation::new(index, attribute, value)
        })
        .collect();
    TvrInstance::from_parts(sample_id, initial, truth_seq, final_view, vocab)
}

fn sample_length(weights: &[f64; 4], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i + MIN_LENGTH;
        }
        u -= w;
    }
    // rounding fallthrough lands on the last positive weight
    weights.iter().rposition(|w| *w > 0.0).unwrap() + MIN_LENGTH
}

fn ood_view(rng: &mut impl Rng) -> ViewTag {
    if rng.gen::<bool>() {
        ViewTag::Left
    } else {
        ViewTag::Right
    }
}

/// Splits `count` into per-weight quotas by largest remainder.
fn quotas(weights: &[f64], count: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * count as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let missing = count - out.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        out[i] += 1;
    }
    out
}

pub fn sample_id(i: usize) -> String {
    format!("tvr-{i:06}")
}

/// Instance `i` draws from its own ChaCha stream, so generation is a pure
/// function of `(spec, i)` and can run in parallel.
pub fn instance_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

/// `spec.count` instances with per-length quotas and an exact OOD fraction.
pub fn generate_dataset(spec: &GenSpec) -> Result<Vec<TvrInstance>, DatasetError> {
    spec.validate()?;
    let mut plan_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lengths: Vec<usize> = quotas(&spec.length_weights, spec.count)
        .into_iter()
        .enumerate()
        .flat_map(|(i, q)| std::iter::repeat_n(i + MIN_LENGTH, q))
        .collect();
    lengths.shuffle(&mut plan_rng);
    let ood = (spec.count as f64 * spec.view_mix).round() as usize;
    let mut is_ood: Vec<bool> = (0..spec.count).map(|i| i < ood).collect();
    is_ood.shuffle(&mut plan_rng);

    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(spec.seed, i);
            let (lo, hi) = spec.object_count_range;
            let objects = rng.gen_range(lo..=hi);
            let view = if is_ood[i] {
                ood_view(&mut rng)
            } else {
                ViewTag::Center
            };
            generate_with(
                &spec.vocab,
                sample_id(i),
                objects,
                lengths[i],
                view,
                &mut rng,
            )
        })
        .collect()
}

pub fn write_dataset(instances: &[TvrInstance], path: &Path) -> Result<(), DatasetError> {
    write_jsonl(path, instances)?;
    Ok(())
}

/// Reads and validates a JSONL dataset. Blank lines are ignored.
pub fn read_dataset(path: &Path, vocab: &AttributeVocab) -> Result<Vec<TvrInstance>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, vocab)
}

pub fn parse_dataset(text: &str, vocab: &AttributeVocab) -> Result<Vec<TvrInstance>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let instance: TvrInstance =
            serde_json::from_str(line).map_err(|e| DatasetError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        instance.validate(vocab)?;
        out.push(instance);
    }
    Ok(out)
}

/// `scene_diff(initial, truth_final)`, which equals `n_hat` for valid instances.
pub fn changed_cells(instance: &TvrInstance) -> usize {
    scene_diff(&instance.initial, &instance.truth_final).expect("same skeleton")
}
