//! Goodness-of-fit measures for predicted compositions.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` for classes with zero variance in `Y`.
    pub r2_per_class: Vec<Option<f64>>,
    /// Mean over the classes with nonzero variance.
    pub r2_mean: f64,
    pub zero_variance_classes: Vec<usize>,
    pub rmse: f64,
    /// Mean over observations of `-sum_j y_j ln yhat_j`.
    pub cross_entropy: f64,
    pub cosine_similarity: f64,
    pub aic: Option<f64>,
}

impl MetricsReport {
    pub fn compute(
        y: ArrayView2<'_, f64>,
        yhat: ArrayView2<'_, f64>,
        aic: Option<f64>,
    ) -> Result<Self> {
        let r2 = r2(y, yhat)?;
        Ok(Self {
            r2_mean: r2.mean,
            zero_variance_classes: r2.zero_variance,
            r2_per_class: r2.per_class,
            rmse: rmse(y, yhat)?,
            cross_entropy: cross_entropy_metric(y, yhat)?,
            cosine_similarity: cosine_similarity(y, yhat)?,
            aic,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct R2 {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub zero_variance: Vec<usize>,
}

fn check_shapes(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<()> {
    if y.dim() != yhat.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Y is {:?} but Yhat is {:?}",
            y.dim(),
            yhat.dim()
        )));
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// Per-class coefficient of determination and its mean. Classes whose
/// observed column is constant are reported as `None` and left out of the
/// mean; the result is an error only when every class is constant.
pub fn r2(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<R2> {
    check_shapes(y, yhat)?;
    let mut per_class = Vec::with_capacity(y.ncols());
    let mut zero_variance = Vec::new();
    for (j, (col, pred)) in y.columns().into_iter().zip(yhat.columns()).enumerate() {
        let mean = col.mean().expect("nonempty column");
        let total: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        if total == 0.0 {
            zero_variance.push(j);
            per_class.push(None);
            continue;
        }
        let resid: f64 = col.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
        per_class.push(Some(1.0 - resid / total));
    }
    let valid: Vec<f64> = per_class.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::ZeroVariance(zero_variance[0]));
    }
    let mean = valid.iter().sum::<f64>() / valid.len() as f64;
    Ok(R2 {
        per_class,
        mean,
        zero_variance,
    })
}

pub fn rmse(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let sq: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sq / y.len() as f64).sqrt())
}

/// Reporting cross-entropy, `-(1/n) sum_i sum_j y_ij ln yhat_ij`.
/// Terms with `y_ij = 0` contribute nothing.
pub fn cross_entropy_metric(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let mut total = 0.0;
    for ((i, j), &p) in yhat.indexed_iter() {
        let t = y[[i, j]];
        if t == 0.0 {
            continue;
        }
        if p.is_nan() || p <= 0.0 {
            return Err(Error::NonPositiveProbability {
                row: i,
                col: j,
                value: p,
            });
        }
        total -= t * p.ln();
    }
    Ok(total / y.nrows() as f64)
}

pub fn cosine_similarity(y: ArrayView2<'_, f64>, yhat: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let mut total = 0.0;
    for (i, (a, b)) in y.rows().into_iter().zip(yhat.rows()).enumerate() {
        let na = a.dot(&a).sqrt();
        let nb = b.dot(&b).sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::ZeroRow(i));
        }
        total += a.dot(&b) / (na * nb);
    }
    Ok(total / y.nrows() as f64)
}

pub fn aic(loglik_hat: f64, k: usize) -> f64 {
    -2.0 * loglik_hat + 2.0 * k as f64
}

/// Row-wise argmax; ties go to the lowest index.
pub fn map_assign(yhat: ArrayView2<'_, f64>) -> Vec<usize> {
    yhat.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
