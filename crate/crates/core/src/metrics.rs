//! Thresholded classification and error measures.
//!
//! * classification error E_i: fraction of samples whose thresholded score
//!   disagrees with the label, and its mean over attributes;
//! * balanced error E_i^B: errors on each class reweighted by the target
//!   class mass over that class's count. With a uniform target this is the
//!   mean of the false-negative and false-positive rates.

use std::fmt::Write as _;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::distribution::ClassDistribution;
use crate::error::{Error, Result};
use crate::labels;

/// `+1` if `score > 0`, else `-1`. A score of exactly zero is negative.
pub fn classify(score: f64) -> Result<i8> {
    if !score.is_finite() {
        return Err(Error::Numeric(format!("cannot classify score {score}")));
    }
    Ok(if score > 0.0 { 1 } else { -1 })
}

/// What to do with an attribute that lacks positives or negatives when
/// computing the balanced error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneratePolicy {
    #[default]
    Fail,
    /// Leave the attribute out and average over the rest.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationErrors {
    pub per_attribute: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalancedErrors {
    /// `None` for attributes skipped under [`DegeneratePolicy::Skip`].
    pub per_attribute: Vec<Option<f64>>,
    pub average: f64,
}

/// Per-attribute class and error counts gathered in one pass.
#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    positives: usize,
    negatives: usize,
    false_negatives: usize,
    false_positives: usize,
}

fn tally(scores: ArrayView2<'_, f64>, labels: ArrayView2<'_, i8>) -> Result<Vec<Counts>> {
    if scores.dim() != labels.dim() {
        return Err(Error::Shape(format!(
            "scores are {:?} but labels are {:?}",
            scores.dim(),
            labels.dim()
        )));
    }
    let (n, m) = scores.dim();
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "cannot evaluate a {n}x{m} score matrix"
        )));
    }
    let mut counts = vec![Counts::default(); m];
    let valid = if let (Some(s), Some(y)) = (scores.as_slice(), labels.as_slice()) {
        s.chunks_exact(m)
            .zip(y.chunks_exact(m))
            .all(|(score_row, label_row)| {
                count_row(&mut counts, score_row.iter(), label_row.iter())
            })
    } else {
        scores
            .rows()
            .into_iter()
            .zip(labels.rows())
            .all(|(score_row, label_row)| {
                count_row(&mut counts, score_row.iter(), label_row.iter())
            })
    };
    if !valid {
        // Locate the offending entry for the error message.
        labels::validate(labels)?;
        for &s in scores {
            classify(s)?;
        }
    }
    Ok(counts)
}

/// Adds one row to the counts; false if a score is not finite or a label
/// is not ±1.
fn count_row<'a>(
    counts: &mut [Counts],
    scores: impl Iterator<Item = &'a f64>,
    labels: impl Iterator<Item = &'a i8>,
) -> bool {
    for ((c, &s), &y) in counts.iter_mut().zip(scores).zip(labels) {
        if !s.is_finite() || (y != 1 && y != -1) {
            return false;
        }
        let predicted_positive = s > 0.0;
        let positive = y > 0;
        c.positives += usize::from(positive);
        c.negatives += usize::from(!positive);
        c.false_negatives += usize::from(positive && !predicted_positive);
        c.false_positives += usize::from(!positive && predicted_positive);
    }
    true
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn classification_error(
    scores: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, i8>,
) -> Result<ClassificationErrors> {
    let counts = tally(scores, labels)?;
    Ok(classification_from_counts(&counts, scores.nrows()))
}

fn classification_from_counts(counts: &[Counts], n: usize) -> ClassificationErrors {
    let per_attribute: Vec<f64> = counts
        .iter()
        .map(|c| (c.false_negatives + c.false_positives) as f64 / n as f64)
        .collect();
    ClassificationErrors {
        average: mean(&per_attribute),
        per_attribute,
    }
}

pub fn balanced_error(
    scores: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, i8>,
    target: &ClassDistribution,
    policy: DegeneratePolicy,
) -> Result<BalancedErrors> {
    let counts = tally(scores, labels)?;
    balanced_from_counts(&counts, target, policy)
}

fn balanced_from_counts(
    counts: &[Counts],
    target: &ClassDistribution,
    policy: DegeneratePolicy,
) -> Result<BalancedErrors> {
    let m = counts.len();
    if target.len() != m {
        return Err(Error::Shape(format!(
            "{m} attributes but the target distribution has {}",
            target.len()
        )));
    }
    let mut per_attribute = Vec::with_capacity(m);
    let (mut sum, mut kept) = (0.0, 0usize);
    for (i, c) in counts.iter().enumerate() {
        let missing = if c.positives == 0 {
            Some("positive")
        } else if c.negatives == 0 {
            Some("negative")
        } else {
            None
        };
        match (missing, policy) {
            (Some(class), DegeneratePolicy::Fail) => {
                return Err(Error::DegenerateEvaluation {
                    attribute: i,
                    class,
                })
            }
            (Some(_), DegeneratePolicy::Skip) => per_attribute.push(None),
            (None, _) => {
                let e = c.false_negatives as f64 * target.positive(i) / c.positives as f64
                    + c.false_positives as f64 * target.negative(i) / c.negatives as f64;
                sum += e;
                kept += 1;
                per_attribute.push(Some(e));
            }
        }
    }
    if kept == 0 {
        return Err(Error::DegenerateEvaluation {
            attribute: 0,
            class: "positive or negative",
        });
    }
    Ok(BalancedErrors {
        average: sum / kept as f64,
        per_attribute,
    })
}

/// Per-attribute error measures for one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub attributes: Vec<AttributeMetrics>,
    pub average_error: f64,
    pub average_balanced_error: f64,
    /// Target distribution used for the balanced error.
    pub target: ClassDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub name: String,
    pub error: f64,
    pub balanced_error: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

impl MetricsReport {
    pub fn compute(
        scores: ArrayView2<'_, f64>,
        labels: ArrayView2<'_, i8>,
        names: &[String],
        target: &ClassDistribution,
        policy: DegeneratePolicy,
    ) -> Result<Self> {
        let counts = tally(scores, labels)?;
        if names.len() != counts.len() {
            return Err(Error::Shape(format!(
                "{} attribute names for {} columns",
                names.len(),
                counts.len()
            )));
        }
        let plain = classification_from_counts(&counts, scores.nrows());
        let balanced = balanced_from_counts(&counts, target, policy)?;
        let attributes = names
            .iter()
            .enumerate()
            .map(|(i, name)| AttributeMetrics {
                name: name.clone(),
                error: plain.per_attribute[i],
                balanced_error: balanced.per_attribute[i],
                positives: counts[i].positives,
                negatives: counts[i].negatives,
            })
            .collect();
        Ok(Self {
            attributes,
            average_error: plain.average,
            average_balanced_error: balanced.average,
            target: target.clone(),
        })
    }

    /// One row per attribute, then a final `average` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("attribute,error,balanced_error,positives,negatives\n");
        for a in &self.attributes {
            let balanced = a.balanced_error.map(|b| b.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                a.name, a.error, balanced, a.positives, a.negatives
            )
            .unwrap();
        }
        writeln!(
            out,
            "average,{},{},,",
            self.average_error, self.average_balanced_error
        )
        .unwrap();
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
