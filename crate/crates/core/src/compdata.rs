//! Containers for compositional labels and regression designs.

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on row sums accepted at ingestion.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Entries below this threshold trigger the zero replacement in `auto` mode.
pub const ZERO_THRESHOLD: f64 = 1e-12;

/// An `n x J` matrix whose rows lie on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionMatrix {
    values: Array2<f64>,
}

impl CompositionMatrix {
    /// Validates `values` and renormalizes rows that are within
    /// [`ROW_SUM_TOLERANCE`] of summing to one.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        validate_composition(values)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn classes(&self) -> usize {
        self.values.ncols()
    }

    /// True when some entry is below [`ZERO_THRESHOLD`], i.e. the likelihood
    /// would need `ln 0`.
    pub fn has_zeros(&self) -> bool {
        self.values.iter().any(|&v| v < ZERO_THRESHOLD)
    }

    /// Rows `rows` of the matrix, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
        }
    }
}

pub fn validate_composition(mut values: Array2<f64>) -> Result<CompositionMatrix> {
    if values.nrows() == 0 || values.ncols() == 0 {
        return Err(Error::Empty);
    }
    if values.ncols() < 2 {
        return Err(Error::TooFewClasses {
            min: 2,
            got: values.ncols(),
        });
    }
    for (i, mut row) in values.axis_iter_mut(Axis(0)).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry { row: i, col: j });
            }
        }
        let sum: f64 = row.sum();
        let deviation = sum - 1.0;
        if deviation.abs() > ROW_SUM_TOLERANCE {
            return Err(Error::RowSumViolation { row: i, deviation });
        }
        if deviation != 0.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    Ok(CompositionMatrix { values })
}

/// Shrinks every entry towards `1/J` so that none is zero:
/// `y* = (y (n - 1) + 1/J) / n`.
pub fn zero_replace(y: &CompositionMatrix) -> CompositionMatrix {
    let n = y.n() as f64;
    let inv_j = 1.0 / y.classes() as f64;
    let values = y.values.mapv(|v| (v * (n - 1.0) + inv_j) / n);
    CompositionMatrix { values }
}

/// Mean design `X` and precision design `Z`, row-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPair {
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    pub x_intercept: bool,
    pub z_intercept: bool,
}

impl DesignPair {
    pub fn new(x: Array2<f64>, z: Array2<f64>) -> Result<Self> {
        if x.nrows() != z.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows but Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        check_finite(x.view())?;
        check_finite(z.view())?;
        let x_intercept = has_intercept(x.view());
        let z_intercept = has_intercept(z.view());
        Ok(Self {
            x,
            z,
            x_intercept,
            z_intercept,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            z: self.z.select(Axis(0), rows),
            x_intercept: self.x_intercept,
            z_intercept: self.z_intercept,
        }
    }
}

pub fn check_finite(m: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

fn has_intercept(m: ArrayView2<'_, f64>) -> bool {
    m.ncols() > 0 && m.column(0).iter().all(|&v| v == 1.0)
}

/// Prepends a column of ones.
pub fn with_intercept(m: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::ones((m.nrows(), m.ncols() + 1));
    out.slice_mut(s![.., 1..]).assign(&m);
    out
}

/// A single column of ones.
pub fn intercept_only(n: usize) -> Array2<f64> {
    Array2::ones((n, 1))
}
