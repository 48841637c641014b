//! Sample-level and population-level evaluation metrics.
//!
//! Predictions are executed on the initial scene and the resulting state is
//! compared cell by cell with the ground-truth final scene.

use crate::datagen::TvrInstance;
use crate::protocol::ParsedResponse;
use crate::scene::{
    apply_sequence, attribute_diff, scene_diff, Attribute, AttributeVocab, Scene, ViewTag,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Object-count buckets reported as Num3, Num6, Num8 and Num10.
pub const BUCKETS: [(usize, usize); 4] = [(1, 3), (4, 6), (7, 8), (9, 10)];
pub const BUCKET_LABELS: [&str; 4] = ["Num3", "Num6", "Num8", "Num10"];

/// Column order of the flat CSV report.
pub const CSV_COLUMNS: [&str; 11] = [
    "TAcc", "Diff", "NDiff", "Color", "Shape", "Size", "Material", "Num3", "Num6", "Num8", "Num10",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no outcomes to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub predicted_final: Scene,
    pub truth_final: Scene,
    pub n_hat: usize,
    /// Number of predicted transformations.
    pub n_pred: usize,
    pub object_count: usize,
    pub view_pair: (ViewTag, ViewTag),
    pub diff: usize,
    /// `diff / n_hat`.
    pub ndiff: f64,
    pub exact: bool,
    /// Color, shape, size, material.
    pub per_attribute_correct: [bool; 4],
}

impl SampleOutcome {
    pub fn is_in_distribution(&self) -> bool {
        self.view_pair.0 == self.view_pair.1
    }

    /// Diff normalized by the predicted count instead (at least 1).
    pub fn ndiff_by_prediction(&self) -> f64 {
        self.diff as f64 / self.n_pred.max(1) as f64
    }
}

pub fn evaluate_sample(
    instance: &TvrInstance,
    parsed: &ParsedResponse,
    vocab: &AttributeVocab,
) -> SampleOutcome {
    let (mut predicted_final, _) = apply_sequence(&instance.initial, &parsed.answer_items, vocab);
    predicted_final.view = instance.truth_final.view;
    let truth = &instance.truth_final;
    let diff = scene_diff(&predicted_final, truth).expect("same skeleton");
    let per_attribute_correct = Attribute::ALL
        .map(|a| attribute_diff(&predicted_final, truth, a).expect("same skeleton") == 0);
    SampleOutcome {
        sample_id: instance.sample_id.clone(),
        n_hat: instance.n_hat(),
        n_pred: parsed.answer_items.len(),
        object_count: instance.object_count(),
        view_pair: instance.view_pair,
        diff,
        ndiff: diff as f64 / instance.n_hat().max(1) as f64,
        exact: diff == 0,
        per_attribute_correct,
        truth_final: truth.clone(),
        predicted_final,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sample_count: usize,
    pub tacc: f64,
    pub mean_diff: f64,
    pub mean_ndiff: f64,
    /// NDiff with the predicted count as denominator.
    pub mean_ndiff_pred: f64,
    /// Color, shape, size, material accuracy in percent.
    pub attr_acc: [f64; 4],
    /// Per-bucket TAcc; `None` for buckets without samples.
    pub bucket_tacc: [Option<f64>; 4],
    pub bucket_sizes: [usize; 4],
    /// "ID" / "OOD" sub-reports, present only when the split is non-empty.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub split_reports: BTreeMap<String, MetricReport>,
}

fn bucket_of(object_count: usize) -> Option<usize> {
    BUCKETS
        .iter()
        .position(|&(lo, hi)| (lo..=hi).contains(&object_count))
}

fn percent(k: usize, n: usize) -> f64 {
    100.0 * k as f64 / n as f64
}

pub fn aggregate(outcomes: &[SampleOutcome]) -> Result<MetricReport, MetricsError> {
    let mut report = aggregate_flat(outcomes)?;
    let (id, ood): (Vec<_>, Vec<_>) = outcomes
        .iter()
        .cloned()
        .partition(SampleOutcome::is_in_distribution);
    for (name, part) in [("ID", id), ("OOD", ood)] {
        if let Ok(sub) = aggregate_flat(&part) {
            report.split_reports.insert(name.to_string(), sub);
        }
    }
    Ok(report)
}

fn aggregate_flat(outcomes: &[SampleOutcome]) -> Result<MetricReport, MetricsError> {
    let n = outcomes.len();
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    // sort the float sums by id so the result does not depend on input order
    let mut diffs: Vec<(&str, usize, f64, f64)> = outcomes
        .iter()
        .map(|o| {
            (
                o.sample_id.as_str(),
                o.diff,
                o.ndiff,
                o.ndiff_by_prediction(),
            )
        })
        .collect();
    diffs.sort_by(|a, b| {
        a.0.cmp(b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
    });
    let mean = |f: fn(&(&str, usize, f64, f64)) -> f64| diffs.iter().map(f).sum::<f64>() / n as f64;

    let exact = outcomes.iter().filter(|o| o.exact).count();
    let attr_acc = [0, 1, 2, 3].map(|a| {
        percent(
            outcomes
                .iter()
                .filter(|o| o.per_attribute_correct[a])
                .count(),
            n,
        )
    });
    let mut bucket_sizes = [0usize; 4];
    let mut bucket_exact = [0usize; 4];
    for o in outcomes {
        if let Some(b) = bucket_of(o.object_count) {
            bucket_sizes[b] += 1;
            bucket_exact[b] += o.exact as usize;
        }
    }
    let bucket_tacc = [0, 1, 2, 3]
        .map(|b| (bucket_sizes[b] > 0).then(|| percent(bucket_exact[b], bucket_sizes[b])));

    Ok(MetricReport {
        sample_count: n,
        tacc: percent(exact, n),
        mean_diff: mean(|d| d.1 as f64),
        mean_ndiff: mean(|d| d.2),
        mean_ndiff_pred: mean(|d| d.3),
        attr_acc,
        bucket_tacc,
        bucket_sizes,
        split_reports: BTreeMap::new(),
    })
}

impl MetricReport {
    /// The eleven metric values in [`CSV_COLUMNS`] order.
    pub fn csv_values(&self) -> [Option<f64>; 11] {
        let [c, s, z, m] = self.attr_acc;
        let [b3, b6, b8, b10] = self.bucket_tacc;
        [
            Some(self.tacc),
            Some(self.mean_diff),
            Some(self.mean_ndiff),
            Some(c),
            Some(s),
            Some(z),
            Some(m),
            b3,
            b6,
            b8,
            b10,
        ]
    }

    /// Header plus one row for the overall report and one per split.
    pub fn to_csv(&self) -> String {
        let mut out = format!("split,{},samples\n", CSV_COLUMNS.join(","));
        let mut row = |name: &str, r: &MetricReport| {
            let cells: Vec<String> = r
                .csv_values()
                .iter()
                .enumerate()
                .map(|(i, v)| match v {
                    // Diff and NDiff carry three decimals, percentages one
                    Some(x) if i == 1 || i == 2 => format!("{x:.3}"),
                    Some(x) => format!("{x:.1}"),
                    None => String::new(),
                })
                .collect();
            out.push_str(&format!("{name},{},{}\n", cells.join(","), r.sample_count));
        };
        row("all", self);
        for (name, sub) in &self.split_reports {
            row(name, sub);
        }
        out
    }
}
