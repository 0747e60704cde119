//! Per-attribute class distributions and the adaptation probabilities derived
//! from a source/target pair.
//!
//! The source distribution is counted from training labels. A target
//! distribution describes the class balance the classifier should be
//! calibrated for. For each attribute the over-represented class gets a
//! backpropagation probability below one so that, in expectation, the
//! effective class mass seen by the loss matches the target.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels;

/// Positive/negative class mass for each of M attributes.
///
/// Only the positive mass is stored; the negative mass is always computed as
/// `1 - positive`, so the two sum to one within a unit in the last place and
/// two distributions with equal positive masses are bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    positive: Vec<f64>,
}

impl ClassDistribution {
    pub fn from_positive(positive: Vec<f64>) -> Result<Self> {
        if positive.is_empty() {
            return Err(Error::InvalidInput(
                "a class distribution needs at least one attribute".into(),
            ));
        }
        if let Some((i, p)) = positive
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidInput(format!(
                "attribute {i}: positive mass {p} is outside [0, 1]"
            )));
        }
        Ok(Self { positive })
    }

    /// T⁺ = T⁻ = 1/2 for every attribute.
    pub fn uniform(num_attributes: usize) -> Result<Self> {
        Self::from_positive(vec![0.5; num_attributes])
    }

    /// Counts the fraction of `+1` entries in each label column.
    pub fn estimate_source(labels: ArrayView2<'_, i8>) -> Result<Self> {
        let (n, m) = labels.dim();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(format!(
                "cannot estimate a distribution from a {n}x{m} label matrix"
            )));
        }
        labels::validate(labels)?;
        let positive = labels
            .columns()
            .into_iter()
            .map(|col| col.iter().filter(|&&y| y == 1).count() as f64 / n as f64)
            .collect();
        Ok(Self { positive })
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    pub fn positive(&self, attribute: usize) -> f64 {
        self.positive[attribute]
    }

    pub fn negative(&self, attribute: usize) -> f64 {
        1.0 - self.positive[attribute]
    }

    /// Mass of the class carried by `label` (`+1` or `-1`).
    pub fn mass(&self, attribute: usize, label: i8) -> f64 {
        if label > 0 {
            self.positive(attribute)
        } else {
            self.negative(attribute)
        }
    }

    pub fn positives(&self) -> &[f64] {
        &self.positive
    }

    /// Restricts the distribution to a single attribute.
    pub fn select(&self, attribute: usize) -> Self {
        Self {
            positive: vec![self.positive[attribute]],
        }
    }

    /// Builds a target from named entries; attributes without an entry keep
    /// their source mass, which gives them adaptation weight one.
    pub fn from_entries(
        entries: &[TargetEntry],
        names: &[String],
        source: &ClassDistribution,
    ) -> Result<Self> {
        if names.len() != source.len() {
            return Err(Error::Shape(format!(
                "{} attribute names for a {}-attribute source distribution",
                names.len(),
                source.len()
            )));
        }
        let mut positive = source.positive.clone();
        let mut seen = vec![false; names.len()];
        for entry in entries {
            let index = names.iter().position(|n| *n == entry.name).ok_or_else(|| {
                Error::InvalidInput(format!("target names unknown attribute {:?}", entry.name))
            })?;
            if std::mem::replace(&mut seen[index], true) {
                return Err(Error::InvalidInput(format!(
                    "target lists attribute {:?} twice",
                    entry.name
                )));
            }
            positive[index] = entry.positive;
        }
        Self::from_positive(positive)
    }

    /// Reads a target file: a JSON array of `{"name": ..., "positive": ...}`.
    pub fn read_target_json(
        path: &Path,
        names: &[String],
        source: &ClassDistribution,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<TargetEntry> = serde_json::from_str(&text).map_err(|e| {
            Error::InvalidInput(format!(
                "{}: malformed target distribution: {e}",
                path.display()
            ))
        })?;
        Self::from_entries(&entries, names, source)
    }
}

/// One element of a target distribution file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetEntry {
    pub name: String,
    pub positive: f64,
}

/// Per-attribute probabilities p(i|+1), p(i|-1) of backpropagating an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationWeights {
    positive: Vec<f64>,
    negative: Vec<f64>,
}

impl AdaptationWeights {
    /// All weights one: plain squared error.
    pub fn ones(num_attributes: usize) -> Self {
        Self {
            positive: vec![1.0; num_attributes],
            negative: vec![1.0; num_attributes],
        }
    }

    /// Builds weights directly, checking that each lies in (0, 1].
    pub fn from_parts(positive: Vec<f64>, negative: Vec<f64>) -> Result<Self> {
        if positive.len() != negative.len() || positive.is_empty() {
            return Err(Error::Shape(format!(
                "{} positive and {} negative weights",
                positive.len(),
                negative.len()
            )));
        }
        if let Some(w) = positive
            .iter()
            .chain(&negative)
            .find(|w| !(**w > 0.0 && **w <= 1.0))
        {
            return Err(Error::InvalidInput(format!(
                "adaptation weight {w} is outside (0, 1]"
            )));
        }
        Ok(Self { positive, negative })
    }

    /// Computes the adaptation probabilities for a source/target pair.
    ///
    /// For the positive class, p = 1 when T⁺ > S⁺ and (S⁻·T⁺)/(S⁺·T⁻)
    /// otherwise; the negative class is symmetric.
    pub fn compute(source: &ClassDistribution, target: &ClassDistribution) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::Shape(format!(
                "source has {} attributes, target has {}",
                source.len(),
                target.len()
            )));
        }
        let m = source.len();
        let mut positive = Vec::with_capacity(m);
        let mut negative = Vec::with_capacity(m);
        for i in 0..m {
            let (s_pos, s_neg) = (source.positive(i), source.negative(i));
            let (t_pos, t_neg) = (target.positive(i), target.negative(i));
            if s_pos == t_pos {
                positive.push(1.0);
                negative.push(1.0);
                continue;
            }
            if s_pos == 0.0 {
                return Err(Error::DegenerateAttribute {
                    attribute: i,
                    class: "positive",
                    target: t_pos,
                });
            }
            if s_neg == 0.0 {
                return Err(Error::DegenerateAttribute {
                    attribute: i,
                    class: "negative",
                    target: t_neg,
                });
            }
            if t_pos == 0.0 || t_neg == 0.0 {
                return Err(Error::InvalidInput(format!(
                    "attribute {i}: target mass {t_pos} would never backpropagate one class"
                )));
            }
            let p_pos = if t_pos > s_pos {
                1.0
            } else {
                ((s_neg * t_pos) / (s_pos * t_neg)).min(1.0)
            };
            let p_neg = if t_neg > s_neg {
                1.0
            } else {
                ((s_pos * t_neg) / (s_neg * t_pos)).min(1.0)
            };
            positive.push(p_pos);
            negative.push(p_neg);
        }
        Ok(Self { positive, negative })
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    pub fn p_pos(&self, attribute: usize) -> f64 {
        self.positive[attribute]
    }

    pub fn p_neg(&self, attribute: usize) -> f64 {
        self.negative[attribute]
    }

    /// p(i | label).
    #[inline]
    pub fn for_label(&self, attribute: usize, label: i8) -> f64 {
        if label > 0 {
            self.positive[attribute]
        } else {
            self.negative[attribute]
        }
    }

    pub fn select(&self, attribute: usize) -> Self {
        Self {
            positive: vec![self.positive[attribute]],
            negative: vec![self.negative[attribute]],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.positive
            .iter()
            .chain(&self.negative)
            .all(|&w| w == 1.0)
    }
}
