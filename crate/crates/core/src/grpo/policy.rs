//! Factorized categorical policy over answers for a single instance.
//!
//! An answer is drawn by first sampling its length `k` from `length_logits`,
//! then `k` independent triplets from `triplet_logits`:
//!
//! ```text
//! log p(T) = log p(k) + sum_i log p(t_i)
//! ```

use crate::datagen::TvrInstance;
use crate::scene::{
    apply_sequence, scene_diff, Attribute, AttributeVocab, Transformation, TransformationSequence,
};
use rand::Rng;
use std::sync::Arc;

/// Cell-set DP is used for the exact-answer probability up to this many cells.
const MAX_DP_CELLS: usize = 16;

/// Every (index, attribute, value) triplet of a scene schema, in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSpace {
    pub object_count: usize,
    pub triplets: Vec<Transformation>,
}

impl TripletSpace {
    pub fn new(object_count: usize, vocab: &AttributeVocab) -> Self {
        let triplets = (0..object_count)
            .flat_map(|i| {
                Attribute::ALL.into_iter().flat_map(move |a| {
                    vocab
                        .values(a)
                        .iter()
                        .map(move |v| Transformation::new(i, a, v.clone()))
                })
            })
            .collect();
        TripletSpace {
            object_count,
            triplets,
        }
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// A sampled answer: its length is `triplets.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Choice {
    pub triplets: Vec<usize>,
}

impl Choice {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    /// Logits over answer lengths `0..=max_len`.
    pub length_logits: Vec<f64>,
    pub triplet_logits: Vec<f64>,
    pub space: Arc<TripletSpace>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1)
}

impl ToyPolicy {
    /// Uniform policy over lengths `0..=max_len` and all triplets.
    pub fn uniform(object_count: usize, max_len: usize, vocab: &AttributeVocab) -> Self {
        let space = Arc::new(TripletSpace::new(object_count, vocab));
        ToyPolicy {
            length_logits: vec![0.0; max_len + 1],
            triplet_logits: vec![0.0; space.len()],
            space,
        }
    }

    pub fn for_instance(instance: &TvrInstance, max_len: usize, vocab: &AttributeVocab) -> Self {
        ToyPolicy::uniform(instance.object_count(), max_len, vocab)
    }

    pub fn max_len(&self) -> usize {
        self.length_logits.len() - 1
    }

    pub fn is_finite(&self) -> bool {
        self.length_logits
            .iter()
            .chain(&self.triplet_logits)
            .all(|x| x.is_finite())
    }

    pub fn length_probs(&self) -> Vec<f64> {
        softmax(&self.length_logits)
    }

    pub fn triplet_probs(&self) -> Vec<f64> {
        softmax(&self.triplet_logits)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Choice {
        let k = sample_categorical(&self.length_probs(), rng);
        let q = self.triplet_probs();
        Choice {
            triplets: (0..k).map(|_| sample_categorical(&q, rng)).collect(),
        }
    }

    pub fn log_prob(&self, choice: &Choice) -> f64 {
        let len = log_softmax(&self.length_logits);
        let trip = log_softmax(&self.triplet_logits);
        len[choice.len()] + choice.triplets.iter().map(|&t| trip[t]).sum::<f64>()
    }

    /// Gradient of [`ToyPolicy::log_prob`] with respect to both logit blocks,
    /// accumulated into `(d_len, d_trip)` with the given weight.
    pub fn accumulate_log_prob_grad(
        &self,
        choice: &Choice,
        weight: f64,
        d_len: &mut [f64],
        d_trip: &mut [f64],
    ) {
        let p = self.length_probs();
        for (i, pi) in p.iter().enumerate() {
            let onehot = if i == choice.len() { 1.0 } else { 0.0 };
            d_len[i] += weight * (onehot - pi);
        }
        let q = self.triplet_probs();
        let k = choice.len() as f64;
        for (t, qt) in q.iter().enumerate() {
            d_trip[t] -= weight * k * qt;
        }
        for &t in &choice.triplets {
            d_trip[t] += weight;
        }
    }

    pub fn materialize(&self, choice: &Choice) -> TransformationSequence {
        choice
            .triplets
            .iter()
            .map(|&t| self.space.triplets[t].clone())
            .collect()
    }

    pub fn mean_length(&self) -> f64 {
        self.length_probs()
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    /// Probability that a sampled answer reproduces the ground-truth final
    /// scene exactly, or `None` when the scene has too many cells for the
    /// exact computation.
    ///
    /// Slots are i.i.d., so the chance that the last write of every cell
    /// is correct equals the chance that the first write is. A DP over the
    /// set of already-written cells then tracks that every first write agrees
    /// with the final scene and that every changed cell gets written.
    pub fn exact_answer_probability(&self, instance: &TvrInstance) -> Option<f64> {
        let cells = self.space.object_count * 4;
        if cells > MAX_DP_CELLS || instance.object_count() != self.space.object_count {
            return None;
        }
        let q = self.triplet_probs();
        let mut mass = vec![0.0; cells];
        let mut good = vec![0.0; cells];
        for (t, triplet) in self.space.triplets.iter().enumerate() {
            let c = triplet.index * 4 + triplet.attribute.ordinal();
            mass[c] += q[t];
            if instance.truth_final.objects[triplet.index].get(triplet.attribute) == triplet.value {
                good[c] += q[t];
            }
        }
        let required = instance.truth_seq.iter().fold(0usize, |m, t| {
            m | 1 << (t.index * 4 + t.attribute.ordinal())
        });

        let width = 1usize << cells;
        let mut seen_mass = vec![0.0; width];
        for mask in 1..width {
            let low = mask.trailing_zeros() as usize;
            seen_mass[mask] = seen_mass[mask & (mask - 1)] + mass[low];
        }

        let p_len = self.length_probs();
        let mut dp = vec![0.0; width];
        dp[0] = 1.0;
        let mut total = 0.0;
        for (k, pk) in p_len.iter().enumerate() {
            if k > 0 {
                let mut next = vec![0.0; width];
                for mask in 0..width {
                    let w = dp[mask];
                    if w == 0.0 {
                        continue;
                    }
                    next[mask] += w * seen_mass[mask];
                    for c in 0..cells {
                        if mask & (1 << c) == 0 && good[c] > 0.0 {
                            next[mask | 1 << c] += w * good[c];
                        }
                    }
                }
                dp = next;
            }
            let hit: f64 = (0..width)
                .filter(|m| m & required == required)
                .map(|m| dp[m])
                .sum();
            total += pk * hit;
        }
        Some(total)
    }

    /// Monte Carlo estimate of the exact-answer probability.
    pub fn exact_answer_rate_mc(
        &self,
        instance: &TvrInstance,
        vocab: &AttributeVocab,
        samples: usize,
        rng: &mut impl Rng,
    ) -> f64 {
        let hits = (0..samples)
            .filter(|_| {
                let seq = self.materialize(&self.sample(rng));
                let (out, _) = apply_sequence(&instance.initial, &seq, vocab);
                scene_diff(&out, &instance.truth_final) == Ok(0)
            })
            .count();
        hits as f64 / samples.max(1) as f64
    }
}
