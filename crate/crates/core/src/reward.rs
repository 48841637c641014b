//! Rule-based verifier: tiered positive reward, dual punishment, and the
//! ablated reward variants.
//!
//! Each predicted transformation is matched one-to-one against the ground
//! truth. A match earns one of three tiers:
//!
//! | tier         | condition                        | default |
//! |--------------|----------------------------------|---------|
//! | `full`       | index, attribute and value agree | 5.0     |
//! | `index_attr` | index and attribute agree        | 1.5     |
//! | `index`      | only the index agrees            | 0.5     |
//!
//! After the positive reward, every prediction that disagrees with the
//! ground-truth final scene costs 1.0, and predicting fewer items than the
//! ground truth costs the shortfall:
//!
//! ```text
//! r_pun = -n_mis - max(0, n_hat - n)
//! r_acc = r_pos + r_pun
//! ```

use crate::datagen::TvrInstance;
use crate::protocol::{format_reward, ParsedResponse};
use crate::scene::{apply_sequence, scene_diff, AttributeVocab, Scene, Transformation};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Largest ground-truth sequence the matcher accepts.
pub const MAX_TRUTH_ITEMS: usize = 16;
/// Upper bound on DP table cells (relevant predictions + 1) * 2^truth.
const MAX_DP_CELLS: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("matching {predictions} predictions against {truths} truths exceeds the size bound")]
    SizeExceeded { predictions: usize, truths: usize },
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error("unknown reward variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    #[default]
    Full,
    WoObj,
    WoAttr,
    WoUp,
    WoPun,
    NaiveBinary,
    AbsCountPun,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 7] = [
        RewardVariant::Full,
        RewardVariant::WoObj,
        RewardVariant::WoAttr,
        RewardVariant::WoUp,
        RewardVariant::WoPun,
        RewardVariant::NaiveBinary,
        RewardVariant::AbsCountPun,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardVariant::Full => "full",
            RewardVariant::WoObj => "wo_obj",
            RewardVariant::WoAttr => "wo_attr",
            RewardVariant::WoUp => "wo_up",
            RewardVariant::WoPun => "wo_pun",
            RewardVariant::NaiveBinary => "naive_binary",
            RewardVariant::AbsCountPun => "abs_count_pun",
        }
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardVariant {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RewardVariant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| RewardError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub tier_full: f64,
    pub tier_index_attr: f64,
    pub tier_index: f64,
    /// Reward per inconsistent prediction (negative).
    pub punish_inconsistent: f64,
    /// Reward granted by `naive_binary` for an exactly correct final state.
    pub naive_reward: f64,
    pub enable_index_tier: bool,
    pub enable_attr_tier: bool,
    pub enable_underprediction_punishment: bool,
    pub enable_inconsistency_punishment: bool,
    /// Whether an `index_attr` match with the wrong value is also punished.
    pub punish_partial_matches: bool,
    pub variant: RewardVariant,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig::preset(RewardVariant::Full)
    }
}

impl RewardConfig {
    pub fn preset(variant: RewardVariant) -> Self {
        let mut cfg = RewardConfig {
            tier_full: 5.0,
            tier_index_attr: 1.5,
            tier_index: 0.5,
            punish_inconsistent: -1.0,
            naive_reward: 1.0,
            enable_index_tier: true,
            enable_attr_tier: true,
            enable_underprediction_punishment: true,
            enable_inconsistency_punishment: true,
            punish_partial_matches: true,
            variant,
        };
        match variant {
            RewardVariant::Full | RewardVariant::NaiveBinary | RewardVariant::AbsCountPun => {}
            RewardVariant::WoObj => cfg.enable_index_tier = false,
            RewardVariant::WoAttr => cfg.enable_attr_tier = false,
            RewardVariant::WoUp => cfg.enable_underprediction_punishment = false,
            RewardVariant::WoPun => {
                cfg.enable_underprediction_punishment = false;
                cfg.enable_inconsistency_punishment = false;
            }
        }
        cfg
    }

    /// Switches to `variant`'s component flags, keeping tier and punishment values.
    pub fn with_variant(&self, variant: RewardVariant) -> Self {
        RewardConfig {
            tier_full: self.tier_full,
            tier_index_attr: self.tier_index_attr,
            tier_index: self.tier_index,
            punish_inconsistent: self.punish_inconsistent,
            naive_reward: self.naive_reward,
            punish_partial_matches: self.punish_partial_matches,
            ..RewardConfig::preset(variant)
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let finite = [
            self.tier_full,
            self.tier_index_attr,
            self.tier_index,
            self.punish_inconsistent,
            self.naive_reward,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(RewardError::InvalidConfig("non-finite reward value".into()));
        }
        if !(self.tier_full > self.tier_index_attr
            && self.tier_index_attr > self.tier_index
            && self.tier_index > 0.0)
        {
            return Err(RewardError::InvalidConfig(
                "tiers must satisfy full > index_attr > index > 0".into(),
            ));
        }
        if self.punish_inconsistent > 0.0 {
            return Err(RewardError::InvalidConfig(
                "punish_inconsistent must not be positive".into(),
            ));
        }
        Ok(())
    }

    /// Tier and award a single (prediction, truth) pair earns, if any.
    pub fn pair_tier(&self, pred: &Transformation, truth: &Transformation) -> Option<MatchTier> {
        if pred.index != truth.index {
            return None;
        }
        if pred.attribute == truth.attribute {
            if pred.value == truth.value {
                return Some(MatchTier::Full);
            }
            if self.enable_attr_tier {
                return Some(MatchTier::IndexAttr);
            }
        }
        self.enable_index_tier.then_some(MatchTier::Index)
    }

    pub fn tier_award(&self, tier: MatchTier) -> f64 {
        match tier {
            MatchTier::Full => self.tier_full,
            MatchTier::IndexAttr => self.tier_index_attr,
            MatchTier::Index => self.tier_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchTier {
    Full,
    IndexAttr,
    Index,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPair {
    pub prediction: usize,
    pub truth: usize,
    pub tier: MatchTier,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchAssignment {
    /// Sorted by prediction position.
    pub pairs: Vec<MatchPair>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
}

impl MatchAssignment {
    pub fn tier_of(&self, prediction: usize) -> Option<MatchTier> {
        self.pairs
            .iter()
            .find(|p| p.prediction == prediction)
            .map(|p| p.tier)
    }
}

/// Maximum-total-award one-to-one assignment of predictions to truths.
///
/// Solved exactly by dynamic programming over the set of consumed truth
/// items. Among optimal assignments the earliest prediction is matched first,
/// to the earliest truth position available.
pub fn match_predictions(
    pred: &[Transformation],
    truth: &[Transformation],
    cfg: &RewardConfig,
) -> Result<MatchAssignment, RewardError> {
    let m = truth.len();
    // predictions that cannot earn anything never take part in a pair
    let relevant: Vec<usize> = (0..pred.len())
        .filter(|&p| truth.iter().any(|t| cfg.pair_tier(&pred[p], t).is_some()))
        .collect();
    let n = relevant.len();
    if m > MAX_TRUTH_ITEMS || (n + 1).saturating_mul(1 << m) > MAX_DP_CELLS {
        return Err(RewardError::SizeExceeded {
            predictions: pred.len(),
            truths: m,
        });
    }

    let tiers: Vec<Vec<Option<MatchTier>>> = relevant
        .iter()
        .map(|&p| truth.iter().map(|t| cfg.pair_tier(&pred[p], t)).collect())
        .collect();

    let width = 1usize << m;
    // best[i * width + mask]: max award from relevant[i..] with `mask` truths used
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        for mask in 0..width {
            let mut value = best[(i + 1) * width + mask];
            for (j, tier) in tiers[i].iter().enumerate() {
                if let Some(tier) = tier {
                    if mask & (1 << j) == 0 {
                        let v = cfg.tier_award(*tier) + best[(i + 1) * width + (mask | 1 << j)];
                        if v > value {
                            value = v;
                        }
                    }
                }
            }
            best[i * width + mask] = value;
        }
    }

    let mut pairs = Vec::new();
    let mut mask = 0usize;
    for i in 0..n {
        let target = best[i * width + mask];
        let choice = tiers[i].iter().enumerate().find_map(|(j, tier)| {
            let tier = (*tier)?;
            (mask & (1 << j) == 0
                && cfg.tier_award(tier) + best[(i + 1) * width + (mask | 1 << j)] == target)
                .then_some((j, tier))
        });
        if let Some((j, tier)) = choice {
            mask |= 1 << j;
            pairs.push(MatchPair {
                prediction: relevant[i],
                truth: j,
                tier,
            });
        }
    }

    let unmatched_predictions = (0..pred.len())
        .filter(|p| !pairs.iter().any(|x| x.prediction == *p))
        .collect();
    let unmatched_truths = (0..m).filter(|j| mask & (1 << j) == 0).collect();
    Ok(MatchAssignment {
        pairs,
        unmatched_predictions,
        unmatched_truths,
    })
}

/// Sum of tier awards over the assigned pairs.
pub fn positive_reward(assignment: &MatchAssignment, cfg: &RewardConfig) -> f64 {
    assignment
        .pairs
        .iter()
        .map(|p| cfg.tier_award(p.tier))
        .fold(0.0, |a, b| a + b)
}

/// True when the prediction disagrees with the ground-truth final scene.
pub fn is_inconsistent(pred: &Transformation, truth_final: &Scene) -> bool {
    match truth_final.object(pred.index) {
        Some(obj) => obj.get(pred.attribute) != pred.value,
        None => true,
    }
}

/// Punishment total and the number of punished (inconsistent) predictions.
pub fn punishment_reward(
    pred: &[Transformation],
    truth_final: &Scene,
    assignment: &MatchAssignment,
    n_hat: usize,
    cfg: &RewardConfig,
) -> (f64, usize) {
    let n = pred.len();
    if cfg.variant == RewardVariant::AbsCountPun {
        return (0.0 - n.abs_diff(n_hat) as f64, 0);
    }
    let n_mis = if cfg.enable_inconsistency_punishment {
        pred.iter()
            .enumerate()
            .filter(|(i, p)| {
                is_inconsistent(p, truth_final)
                    && (cfg.punish_partial_matches
                        || assignment.tier_of(*i) != Some(MatchTier::IndexAttr))
            })
            .count()
    } else {
        0
    };
    let mut reward = n_mis as f64 * cfg.punish_inconsistent;
    if cfg.enable_underprediction_punishment && n < n_hat {
        reward -= (n_hat - n) as f64;
    }
    // adding 0.0 turns -0.0 into 0.0
    (reward + 0.0, n_mis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionScore {
    pub tier: Option<MatchTier>,
    pub award: f64,
    pub inconsistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_pos: f64,
    pub r_pun: f64,
    pub r_acc: f64,
    pub r_total: f64,
    pub n: usize,
    pub n_hat: usize,
    pub n_mis: usize,
    pub per_prediction: Vec<PredictionScore>,
}

/// Scores a parsed response against an instance: `r_total = r_format + r_acc`.
pub fn score_response(
    parsed: &ParsedResponse,
    instance: &TvrInstance,
    cfg: &RewardConfig,
    vocab: &AttributeVocab,
) -> Result<RewardBreakdown, RewardError> {
    score_prediction(
        &parsed.answer_items,
        format_reward(parsed),
        instance,
        cfg,
        vocab,
    )
}

/// [`score_response`] over an already extracted prediction list.
pub fn score_prediction(
    pred: &[Transformation],
    r_format: f64,
    instance: &TvrInstance,
    cfg: &RewardConfig,
    vocab: &AttributeVocab,
) -> Result<RewardBreakdown, RewardError> {
    let n = pred.len();
    let n_hat = instance.n_hat();

    if cfg.variant == RewardVariant::NaiveBinary {
        let (predicted, _) = apply_sequence(&instance.initial, pred, vocab);
        let exact = scene_diff(&predicted, &instance.truth_final) == Ok(0);
        let r_acc = if exact { cfg.naive_reward } else { 0.0 };
        return Ok(RewardBreakdown {
            r_format,
            r_pos: r_acc,
            r_pun: 0.0,
            r_acc,
            r_total: r_format + r_acc,
            n,
            n_hat,
            n_mis: 0,
            per_prediction: pred
                .iter()
                .map(|p| PredictionScore {
                    tier: None,
                    award: 0.0,
                    inconsistent: is_inconsistent(p, &instance.truth_final),
                })
                .collect(),
        });
    }

    let assignment = match_predictions(pred, &instance.truth_seq, cfg)?;
    let r_pos = positive_reward(&assignment, cfg);
    let (r_pun, n_mis) = punishment_reward(pred, &instance.truth_final, &assignment, n_hat, cfg);
    let per_prediction = pred
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let tier = assignment.tier_of(i);
            PredictionScore {
                tier,
                award: tier.map_or(0.0, |t| cfg.tier_award(t)),
                inconsistent: is_inconsistent(p, &instance.truth_final),
            }
        })
        .collect();
    let r_acc = r_pos + r_pun;
    Ok(RewardBreakdown {
        r_format,
        r_pos,
        r_pun,
        r_acc,
        r_total: r_format + r_acc,
        n,
        n_hat,
        n_mis,
        per_prediction,
    })
}

/// One line of the score output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub r_format: f64,
    pub r_pos: f64,
    pub r_pun: f64,
    pub r_acc: f64,
    pub r_total: f64,
    pub n: usize,
    pub n_hat: usize,
    pub n_mis: usize,
    pub tiers: Vec<Option<MatchTier>>,
}

impl ScoreRecord {
    pub fn new(sample_id: impl Into<String>, b: &RewardBreakdown) -> Self {
        ScoreRecord {
            sample_id: sample_id.into(),
            r_format: b.r_format,
            r_pos: b.r_pos,
            r_pun: b.r_pun,
            r_acc: b.r_acc,
            r_total: b.r_total,
            n: b.n,
            n_hat: b.n_hat,
            n_mis: b.n_mis,
            tiers: b.per_prediction.iter().map(|p| p.tier).collect(),
        }
    }
}
