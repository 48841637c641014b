//! Symbolic scenes and the semantics of attribute transformations.
//!
//! A [`Scene`] is an ordered list of objects, each carrying four categorical
//! attributes. A [`Transformation`] sets one attribute of one object; a
//! sequence of them maps an initial scene onto a final one.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest number of objects a scene may hold.
pub const MAX_OBJECTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SceneError {
    #[error("object index {index} is not present in a scene of {len} objects")]
    UnknownIndex { index: usize, len: usize },
    #[error("value `{value}` is not in the {attribute} vocabulary")]
    UnknownValue { attribute: Attribute, value: String },
    #[error("scenes have different object counts ({left} vs {right})")]
    ShapeMismatch { left: usize, right: usize },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
}

/// The four attribute kinds an object carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Color,
    Shape,
    Size,
    Material,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::Color,
        Attribute::Shape,
        Attribute::Size,
        Attribute::Material,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Color => "color",
            Attribute::Shape => "shape",
            Attribute::Size => "size",
            Attribute::Material => "material",
        }
    }

    /// Position in [`Attribute::ALL`].
    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "color" => Ok(Attribute::Color),
            "shape" => Ok(Attribute::Shape),
            "size" => Ok(Attribute::Size),
            "material" => Ok(Attribute::Material),
            other => Err(format!("unknown attribute `{other}`")),
        }
    }
}

/// Ordered value lists for every attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeVocab {
    pub colors: Vec<String>,
    pub shapes: Vec<String>,
    pub sizes: Vec<String>,
    pub materials: Vec<String>,
}

impl Default for AttributeVocab {
    fn default() -> Self {
        let owned = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        AttributeVocab {
            colors: owned(&[
                "gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow",
            ]),
            shapes: owned(&["cube", "sphere", "cylinder"]),
            sizes: owned(&["small", "medium", "large"]),
            materials: owned(&["rubber", "metal"]),
        }
    }
}

impl AttributeVocab {
    pub fn new(
        colors: Vec<String>,
        shapes: Vec<String>,
        sizes: Vec<String>,
        materials: Vec<String>,
    ) -> Result<Self, SceneError> {
        let vocab = AttributeVocab {
            colors,
            shapes,
            sizes,
            materials,
        };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        for attr in Attribute::ALL {
            let values = self.values(attr);
            if values.is_empty() {
                return Err(SceneError::InvalidVocab(format!("{attr} list is empty")));
            }
            for (i, v) in values.iter().enumerate() {
                if values[..i].contains(v) {
                    return Err(SceneError::InvalidVocab(format!(
                        "{attr} list repeats `{v}`"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn values(&self, attribute: Attribute) -> &[String] {
        match attribute {
            Attribute::Color => &self.colors,
            Attribute::Shape => &self.shapes,
            Attribute::Size => &self.sizes,
            Attribute::Material => &self.materials,
        }
    }

    pub fn contains(&self, attribute: Attribute, value: &str) -> bool {
        self.values(attribute).iter().any(|v| v == value)
    }

    pub fn position(&self, attribute: Attribute, value: &str) -> Option<usize> {
        self.values(attribute).iter().position(|v| v == value)
    }

    /// Number of distinct (attribute, value) pairs, i.e. triplets per object.
    pub fn values_per_object(&self) -> usize {
        Attribute::ALL.iter().map(|&a| self.values(a).len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneObject {
    #[serde(rename = "idx")]
    pub index: usize,
    pub color: String,
    pub shape: String,
    pub size: String,
    pub material: String,
}

impl SceneObject {
    pub fn get(&self, attribute: Attribute) -> &str {
        match attribute {
            Attribute::Color => &self.color,
            Attribute::Shape => &self.shape,
            Attribute::Size => &self.size,
            Attribute::Material => &self.material,
        }
    }

    pub fn set(&mut self, attribute: Attribute, value: impl Into<String>) {
        let slot = match attribute {
            Attribute::Color => &mut self.color,
            Attribute::Shape => &mut self.shape,
            Attribute::Size => &mut self.size,
            Attribute::Material => &mut self.material,
        };
        *slot = value.into();
    }

    /// Feature string in the `{idx: 0; color: ..; material: ..; shape: ..; size: ..}` form.
    pub fn feature_string(&self) -> String {
        format!(
            "{{idx: {}; color: {}; material: {}; shape: {}; size: {}}}",
            self.index, self.color, self.material, self.shape, self.size
        )
    }
}

/// Camera position a scene was observed from. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewTag {
    #[default]
    Center,
    Left,
    Right,
}

impl ViewTag {
    pub fn name(self) -> &'static str {
        match self {
            ViewTag::Center => "center",
            ViewTag::Left => "left",
            ViewTag::Right => "right",
        }
    }
}

impl fmt::Display for ViewTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scene {
    #[serde(rename = "view")]
    pub view: ViewTag,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn new(view: ViewTag, objects: Vec<SceneObject>) -> Result<Self, SceneError> {
        let scene = Scene { view, objects };
        scene.check_indices()?;
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn object(&self, index: usize) -> Option<&SceneObject> {
        self.objects.get(index)
    }

    /// Object indices must be exactly `0..len` in order, with `1 <= len <= 10`.
    pub fn check_indices(&self) -> Result<(), SceneError> {
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return Err(SceneError::Invalid(format!(
                "object count {} outside 1..={MAX_OBJECTS}",
                self.objects.len()
            )));
        }
        for (pos, obj) in self.objects.iter().enumerate() {
            if obj.index != pos {
                return Err(SceneError::Invalid(format!(
                    "object at position {pos} has index {}",
                    obj.index
                )));
            }
        }
        Ok(())
    }

    /// Index check plus vocabulary membership of every attribute value.
    pub fn validate(&self, vocab: &AttributeVocab) -> Result<(), SceneError> {
        self.check_indices()?;
        for obj in &self.objects {
            for attr in Attribute::ALL {
                let value = obj.get(attr);
                if !vocab.contains(attr, value) {
                    return Err(SceneError::UnknownValue {
                        attribute: attr,
                        value: value.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// True when both scenes hold the same objects, ignoring the view tag.
    pub fn same_objects(&self, other: &Scene) -> bool {
        self.objects == other.objects
    }
}

/// Sets `attribute` of object `index` to `value`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transformation {
    pub index: usize,
    pub attribute: Attribute,
    pub value: String,
}

impl Transformation {
    pub fn new(index: usize, attribute: Attribute, value: impl Into<String>) -> Self {
        Transformation {
            index,
            attribute,
            value: value.into(),
        }
    }

    /// The (object, attribute) cell this transformation writes.
    pub fn cell(&self) -> (usize, Attribute) {
        (self.index, self.attribute)
    }
}

impl fmt::Display for Transformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.index, self.attribute, self.value)
    }
}

pub type TransformationSequence = Vec<Transformation>;

/// Returns a copy of `scene` with one attribute reassigned.
pub fn apply_transformation(
    scene: &Scene,
    t: &Transformation,
    vocab: &AttributeVocab,
) -> Result<Scene, SceneError> {
    if t.index >= scene.len() {
        return Err(SceneError::UnknownIndex {
            index: t.index,
            len: scene.len(),
        });
    }
    if !vocab.contains(t.attribute, &t.value) {
        return Err(SceneError::UnknownValue {
            attribute: t.attribute,
            value: t.value.clone(),
        });
    }
    let mut out = scene.clone();
    out.objects[t.index].set(t.attribute, t.value.as_str());
    Ok(out)
}

/// Left-to-right fold of [`apply_transformation`]. Invalid items are skipped
/// and counted instead of aborting the fold.
pub fn apply_sequence(
    scene: &Scene,
    seq: &[Transformation],
    vocab: &AttributeVocab,
) -> (Scene, usize) {
    let mut out = scene.clone();
    let mut skipped = 0;
    for t in seq {
        if t.index < out.len() && vocab.contains(t.attribute, &t.value) {
            out.objects[t.index].set(t.attribute, t.value.as_str());
        } else {
            skipped += 1;
        }
    }
    (out, skipped)
}

/// Number of objects whose `attribute` differs between the two scenes.
pub fn attribute_diff(a: &Scene, b: &Scene, attribute: Attribute) -> Result<usize, SceneError> {
    same_shape(a, b)?;
    Ok(a.objects
        .iter()
        .zip(&b.objects)
        .filter(|(x, y)| x.get(attribute) != y.get(attribute))
        .count())
}

/// Number of differing (object, attribute) cells over all four attributes.
pub fn scene_diff(a: &Scene, b: &Scene) -> Result<usize, SceneError> {
    same_shape(a, b)?;
    Ok(a.objects
        .iter()
        .zip(&b.objects)
        .map(|(x, y)| {
            Attribute::ALL
                .iter()
                .filter(|&&attr| x.get(attr) != y.get(attr))
                .count()
        })
        .sum())
}

fn same_shape(a: &Scene, b: &Scene) -> Result<(), SceneError> {
    if a.len() != b.len() {
        return Err(SceneError::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// True when no two items share an (index, attribute) cell.
pub fn has_distinct_cells(seq: &[Transformation]) -> bool {
    seq.iter()
        .enumerate()
        .all(|(i, t)| seq[..i].iter().all(|u| u.cell() != t.cell()))
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> AttributeVocab {
        AttributeVocab::default()
    }

    #[test]
    fn default_vocab_cardinalities() {
        let v = vocab();
        assert_eq!(
            (
                v.colors.len(),
                v.shapes.len(),
                v.sizes.len(),
                v.materials.len()
            ),
            (8, 3, 3, 2)
        );
        assert_eq!(v.values_per_object(), 16);
        v.validate().unwrap();
    }

    #[test]
    fn vocab_rejects_duplicates_and_empty_lists() {
        let mut v = vocab();
        v.shapes.push("cube".into());
        assert!(matches!(v.validate(), Err(SceneError::InvalidVocab(_))));
        let mut v = vocab();
        v.materials.clear();
        assert!(matches!(v.validate(), Err(SceneError::InvalidVocab(_))));
    }

    #[test]
    fn apply_sets_one_attribute() {
        let scene = plain_scene(5);
        let t = Transformation::new(3, Attribute::Color, "yellow");
        let out = apply_transformation(&scene, &t, &vocab()).unwrap();
        assert_eq!(out.objects[3].color, "yellow");
        assert_eq!(scene.objects[3].color, "gray");
        assert_eq!(scene_diff(&scene, &out).unwrap(), 1);
    }

    #[test]
    fn apply_restating_value_is_identity() {
        let scene = plain_scene(5);
        let t = Transformation::new(3, Attribute::Color, "gray");
        assert_eq!(apply_transformation(&scene, &t, &vocab()).unwrap(), scene);
    }

    #[test]
    fn apply_rejects_bad_index_and_value() {
        let scene = plain_scene(5);
        let t = Transformation::new(9, Attribute::Size, "large");
        assert_eq!(
            apply_transformation(&scene, &t, &vocab()),
            Err(SceneError::UnknownIndex { index: 9, len: 5 })
        );
        let t = Transformation::new(0, Attribute::Size, "huge");
        assert!(matches!(
            apply_transformation(&scene, &t, &vocab()),
            Err(SceneError::UnknownValue { .. })
        ));
    }

    #[test]
    fn sequence_folds_left_to_right() {
        let scene = plain_scene(3);
        let (out, skipped) = apply_sequence(&scene, &[], &vocab());
        assert_eq!((out, skipped), (scene.clone(), 0));

        let seq = vec![
            Transformation::new(0, Attribute::Color, "red"),
            Transformation::new(0, Attribute::Color, "blue"),
        ];
        let (out, _) = apply_sequence(&scene, &seq, &vocab());
        assert_eq!(out.objects[0].color, "blue");
    }

    #[test]
    fn sequence_skips_invalid_items() {
        let scene = plain_scene(3);
        let seq = vec![
            Transformation::new(0, Attribute::Color, "red"),
            Transformation::new(7, Attribute::Shape, "sphere"),
            Transformation::new(2, Attribute::Material, "metal"),
        ];
        let (out, skipped) = apply_sequence(&scene, &seq, &vocab());
        assert_eq!(skipped, 1);
        assert_eq!(out.objects[0].color, "red");
        assert_eq!(out.objects[2].material, "metal");
        assert_eq!(scene_diff(&scene, &out).unwrap(), 2);
    }

    #[test]
    fn diff_counts_cells() {
        let a = plain_scene(5);
        assert_eq!(scene_diff(&a, &a).unwrap(), 0);
        let mut b = a.clone();
        b.objects[2].color = "red".into();
        b.objects[4].size = "large".into();
        assert_eq!(scene_diff(&a, &b).unwrap(), 2);
        assert_eq!(attribute_diff(&a, &b, Attribute::Color).unwrap(), 1);
        assert_eq!(attribute_diff(&a, &b, Attribute::Size).unwrap(), 1);
        assert_eq!(attribute_diff(&a, &b, Attribute::Shape).unwrap(), 0);
        assert_eq!(attribute_diff(&a, &b, Attribute::Material).unwrap(), 0);
    }

    #[test]
    fn diff_rejects_shape_mismatch() {
        let a = plain_scene(3);
        let b = plain_scene(4);
        assert_eq!(
            scene_diff(&a, &b),
            Err(SceneError::ShapeMismatch { left: 3, right: 4 })
        );
        assert!(attribute_diff(&a, &b, Attribute::Color).is_err());
    }

    #[test]
    fn scene_json_uses_exact_keys() {
        let scene = Scene::new(
            ViewTag::Left,
            vec![object(0, "yellow", "cylinder", "medium", "metal")],
        )
        .unwrap();
        let json = serde_json::to_string(&scene).unwrap();
        assert_eq!(
            json,
            r#"{"view":"left","objects":[{"idx":0,"color":"yellow","shape":"cylinder","size":"medium","material":"metal"}]}"#
        );
        let back: Scene = serde_json::from_str(&json).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn scene_index_invariant() {
        let bad = Scene {
            view: ViewTag::Center,
            objects: vec![object(1, "gray", "cube", "small", "rubber")],
        };
        assert!(bad.check_indices().is_err());
        assert!(Scene::new(ViewTag::Center, vec![]).is_err());
        let too_many = (0..11)
            .map(|i| object(i, "gray", "cube", "small", "rubber"))
            .collect();
        assert!(Scene::new(ViewTag::Center, too_many).is_err());
    }

    fn arb_scene() -> impl Strategy<Value = Scene> {
        let v = AttributeVocab::default();
        (1usize..=MAX_OBJECTS).prop_flat_map(move |n| {
            let v = v.clone();
            proptest::collection::vec((0..8usize, 0..3usize, 0..3usize, 0..2usize), n).prop_map(
                move |cells| {
                    let objects = cells
                        .iter()
                        .enumerate()
                        .map(|(i, &(c, s, z, m))| SceneObject {
                            index: i,
                            color: v.colors[c].clone(),
                            shape: v.shapes[s].clone(),
                            size: v.sizes[z].clone(),
                            material: v.materials[m].clone(),
                        })
                        .collect();
                    Scene::new(ViewTag::Center, objects).unwrap()
                },
            )
        })
    }

    fn arb_transformation(n: usize) -> impl Strategy<Value = Transformation> {
        let v = AttributeVocab::default();
        (0..n + 2, 0..4usize, 0..8usize).prop_map(move |(i, a, k)| {
            let attr = Attribute::ALL[a];
            let values = v.values(attr);
            Transformation::new(i, attr, values[k % values.len()].clone())
        })
    }

    /// Cell-by-cell comparison, independent of `scene_diff`.
    fn brute_diff(a: &Scene, b: &Scene) -> usize {
        let mut n = 0;
        for i in 0..a.len() {
            if a.objects[i].color != b.objects[i].color {
                n += 1;
            }
            if a.objects[i].shape != b.objects[i].shape {
                n += 1;
            }
            if a.objects[i].size != b.objects[i].size {
                n += 1;
            }
            if a.objects[i].material != b.objects[i].material {
                n += 1;
            }
        }
        n
    }

    proptest! {
        #[test]
        fn frame_property(scene in arb_scene(), a in 0..4usize, k in 0..8usize, pick in 0..10usize) {
            let v = AttributeVocab::default();
            let attr = Attribute::ALL[a];
            let idx = pick % scene.len();
            let value = v.values(attr)[k % v.values(attr).len()].clone();
            let t = Transformation::new(idx, attr, value.clone());
            let out = apply_transformation(&scene, &t, &v).unwrap();
            for (i, (x, y)) in scene.objects.iter().zip(&out.objects).enumerate() {
                for other in Attribute::ALL {
                    if i == idx && other == attr {
                        prop_assert_eq!(y.get(other), value.as_str());
                    } else {
                        prop_assert_eq!(x.get(other), y.get(other));
                    }
                }
            }
        }

        #[test]
        fn diff_matches_brute_force_and_decomposes(a in arb_scene(), seed in proptest::collection::vec((0..10usize, 0..4usize, 0..8usize), 0..12)) {
            let v = AttributeVocab::default();
            let seq: Vec<_> = seed.iter().map(|&(i, at, k)| {
                let attr = Attribute::ALL[at];
                Transformation::new(i % a.len(), attr, v.values(attr)[k % v.values(attr).len()].clone())
            }).collect();
            let (b, _) = apply_sequence(&a, &seq, &v);
            let d = scene_diff(&a, &b).unwrap();
            prop_assert_eq!(d, brute_diff(&a, &b));
            prop_assert_eq!(d, scene_diff(&b, &a).unwrap());
            let parts: usize = Attribute::ALL.iter().map(|&x| attribute_diff(&a, &b, x).unwrap()).sum();
            prop_assert_eq!(parts, d);
        }

        #[test]
        fn self_diff_is_zero(scene in arb_scene(), seq in proptest::collection::vec(arb_transformation(10), 0..8)) {
            let v = AttributeVocab::default();
            let (x, _) = apply_sequence(&scene, &seq, &v);
            let (y, _) = apply_sequence(&scene, &seq, &v);
            prop_assert_eq!(scene_diff(&x, &y).unwrap(), 0);
        }

        #[test]
        fn non_conflicting_order_independence(scene in arb_scene(), seq in proptest::collection::vec(arb_transformation(10), 0..8), rot in 0..8usize) {
            let v = AttributeVocab::default();
            let mut distinct: Vec<Transformation> = Vec::new();
            for t in seq {
                if t.index < scene.len() && distinct.iter().all(|u| u.cell() != t.cell()) {
                    distinct.push(t);
                }
            }
            let (x, _) = apply_sequence(&scene, &distinct, &v);
            let mut permuted = distinct.clone();
            permuted.reverse();
            if !permuted.is_empty() {
                let r = rot % permuted.len();
                permuted.rotate_left(r);
            }
            let (y, _) = apply_sequence(&scene, &permuted, &v);
            prop_assert_eq!(x, y);
        }

        #[test]
        fn non_redundant_sequence_changes_exactly_its_length(scene in arb_scene(), picks in proptest::collection::vec((0..10usize, 0..4usize, 1..8usize), 0..8)) {
            let v = AttributeVocab::default();
            let mut seq: Vec<Transformation> = Vec::new();
            for (i, a, shift) in picks {
                let attr = Attribute::ALL[a];
                let idx = i % scene.len();
                if seq.iter().any(|t| t.cell() == (idx, attr)) {
                    continue;
                }
                let values = v.values(attr);
                if values.len() < 2 {
                    continue;
                }
                let cur = v.position(attr, scene.objects[idx].get(attr)).unwrap();
                let next = (cur + 1 + shift % (values.len() - 1)) % values.len();
                seq.push(Transformation::new(idx, attr, values[next].clone()));
            }
            let (out, _) = apply_sequence(&scene, &seq, &v);
            prop_assert_eq!(scene_diff(&scene, &out).unwrap(), seq.len());
        }
    }
}
