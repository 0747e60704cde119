//! The mixed-objective loss: a sum over samples and attributes of squared
//! errors, each weighted by the adaptation probability of its label's class.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use crate::distribution::AdaptationWeights;
use crate::error::{Error, Result};
use crate::labels;

/// Network outputs, labels, and adaptation weights for one mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    predictions: ArrayView2<'a, f64>,
    labels: ArrayView2<'a, i8>,
    weights: &'a AdaptationWeights,
}

impl<'a> LossBatch<'a> {
    pub fn new(
        predictions: ArrayView2<'a, f64>,
        labels: ArrayView2<'a, i8>,
        weights: &'a AdaptationWeights,
    ) -> Result<Self> {
        if predictions.dim() != labels.dim() {
            return Err(Error::Shape(format!(
                "predictions are {:?} but labels are {:?}",
                predictions.dim(),
                labels.dim()
            )));
        }
        if labels.ncols() != weights.len() {
            return Err(Error::Shape(format!(
                "{} label columns but {} adaptation weights",
                labels.ncols(),
                weights.len()
            )));
        }
        labels::validate(labels)?;
        Ok(Self {
            predictions,
            labels,
            weights,
        })
    }

    pub fn predictions(&self) -> ArrayView2<'a, f64> {
        self.predictions
    }

    pub fn labels(&self) -> ArrayView2<'a, i8> {
        self.labels
    }

    pub fn weights(&self) -> &'a AdaptationWeights {
        self.weights
    }
}

/// Σ_j Σ_i p(i|Y_ji)·(f_i(X_j) − Y_ji)².
pub fn moon_loss(batch: &LossBatch<'_>) -> f64 {
    let w = batch.weights;
    let mut total = 0.0;
    for (pred_row, label_row) in batch
        .predictions
        .rows()
        .into_iter()
        .zip(batch.labels.rows())
    {
        for (i, (&f, &y)) in pred_row.iter().zip(label_row.iter()).enumerate() {
            let r = f - f64::from(y);
            total += w.for_label(i, y) * r * r;
        }
    }
    total
}

/// Exact gradient of [`moon_loss`] with respect to the predictions.
pub fn moon_gradient_weighted(batch: &LossBatch<'_>) -> Array2<f64> {
    let w = batch.weights;
    let mut grad = Array2::zeros(batch.predictions.raw_dim());
    for ((j, i), g) in grad.indexed_iter_mut() {
        let y = batch.labels[[j, i]];
        *g = 2.0 * w.for_label(i, y) * (batch.predictions[[j, i]] - f64::from(y));
    }
    grad
}

/// Stochastic realization of the weighting: each entry keeps its unweighted
/// gradient 2(f − y) with probability p(i|y) and is zeroed otherwise.
/// One independent draw per (sample, attribute) entry.
pub fn moon_gradient_sampled<R: Rng + ?Sized>(batch: &LossBatch<'_>, rng: &mut R) -> Array2<f64> {
    let w = batch.weights;
    let mut grad = Array2::zeros(batch.predictions.raw_dim());
    for ((j, i), g) in grad.indexed_iter_mut() {
        let y = batch.labels[[j, i]];
        let keep = rng.random::<f64>() < w.for_label(i, y);
        if keep {
            *g = 2.0 * (batch.predictions[[j, i]] - f64::from(y));
        }
    }
    grad
}

/// max(0, 1 − y·f).
pub fn hinge_loss(prediction: f64, label: i8) -> Result<f64> {
    check_label(label)?;
    Ok((1.0 - f64::from(label) * prediction).max(0.0))
}

/// Summed hinge loss over a matrix of predictions.
pub fn hinge_loss_sum(predictions: ArrayView2<'_, f64>, labels: ArrayView2<'_, i8>) -> Result<f64> {
    check_shapes(predictions, labels)?;
    labels::validate(labels)?;
    Ok(Zip::from(predictions)
        .and(labels)
        .fold(0.0, |acc, &f, &y| acc + (1.0 - f64::from(y) * f).max(0.0)))
}

/// Subgradient of the summed hinge loss: −y inside the margin, 0 outside.
pub fn hinge_gradient(
    predictions: ArrayView2<'_, f64>,
    labels: ArrayView2<'_, i8>,
) -> Result<Array2<f64>> {
    check_shapes(predictions, labels)?;
    labels::validate(labels)?;
    Ok(Zip::from(predictions).and(labels).map_collect(|&f, &y| {
        let y = f64::from(y);
        if y * f < 1.0 {
            -y
        } else {
            0.0
        }
    }))
}

fn check_label(label: i8) -> Result<()> {
    if label == 1 || label == -1 {
        Ok(())
    } else {
        Err(Error::InvalidLabel {
            row: 0,
            column: 0,
            value: f64::from(label),
        })
    }
}

fn check_shapes(predictions: ArrayView2<'_, f64>, labels: ArrayView2<'_, i8>) -> Result<()> {
    if predictions.dim() != labels.dim() {
        return Err(Error::Shape(format!(
            "predictions are {:?} but labels are {:?}",
            predictions.dim(),
            labels.dim()
        )));
    }
    Ok(())
}
