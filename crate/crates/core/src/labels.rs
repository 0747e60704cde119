//! ±1 label matrices.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// N×M matrix of attribute labels, each entry `-1` or `+1`.
pub type Labels = Array2<i8>;

/// Checks that every entry is exactly `-1` or `+1`.
pub fn validate(labels: ArrayView2<'_, i8>) -> Result<()> {
    if labels
        .as_slice()
        .is_some_and(|s| s.iter().all(|&v| v == 1 || v == -1))
    {
        return Ok(());
    }
    for ((row, column), &value) in labels.indexed_iter() {
        if value != 1 && value != -1 {
            return Err(Error::InvalidLabel {
                row,
                column,
                value: f64::from(value),
            });
        }
    }
    Ok(())
}

/// Converts a real-valued matrix of labels, rejecting anything outside {-1, +1}.
pub fn from_f64(values: ArrayView2<'_, f64>) -> Result<Labels> {
    let mut out = Array2::zeros(values.raw_dim());
    for ((row, column), &value) in values.indexed_iter() {
        out[[row, column]] = if value == 1.0 {
            1
        } else if value == -1.0 {
            -1
        } else {
            return Err(Error::InvalidLabel { row, column, value });
        };
    }
    Ok(out)
}
