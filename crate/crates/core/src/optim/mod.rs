//! Box-constrained quasi-Newton maximization and the model-fitting drivers.

pub(crate) mod fit;
mod lbfgsb;

use faer::linalg::solvers::DenseSolveCore;
use faer::Side;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dirichlet::ModelParams;
use crate::error::{Error, Result};
use crate::spatial::lag::{from_faer, to_faer};

pub use fit::{
    fit_dirichlet, predict, CovarianceSource, FitNotes, FitResult, ZeroReplacement,
};
pub use lbfgsb::{maximize, Bounds, Maximum, Termination};

/// Smallest reciprocal condition number of `-H` accepted for a covariance.
pub const MIN_INFORMATION_RCOND: f64 = 1e-12;

/// Optimizer and fitting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Infinity norm of the projected gradient.
    pub gradient_tolerance: f64,
    pub objective_rel_tolerance: f64,
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub rho_bounds: (f64, f64),
    /// Starting point; zeros when absent.
    pub init: Option<ModelParams>,
    /// Number of `rho` values probed to choose the starting `rho` of a
    /// spatial fit; 0 starts at the `rho` of `init` (or 0).
    pub rho_grid: usize,
    pub zero_replacement: ZeroReplacement,
    pub seed: Option<u64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            objective_rel_tolerance: 1e-10,
            memory: 10,
            rho_bounds: (-1.0, 1.0),
            init: None,
            rho_grid: 0,
            zero_replacement: ZeroReplacement::Auto,
            seed: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rho_bounds;
        if !(self.gradient_tolerance > 0.0 && self.objective_rel_tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho bounds ({lo}, {hi}) must be ordered inside [-1, 1]"
            )));
        }
        if self.memory == 0 {
            return Err(Error::InvalidConfig("memory must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inverse of `-H` and the square roots of its diagonal.
pub fn covariance_from_hessian(h: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::NonSquare {
            rows: n,
            cols: h.ncols(),
        });
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInformation);
    }
    let info = to_faer((-&h).view());
    let llt = info.llt(Side::Lower).map_err(|_| Error::SingularInformation)?;
    let cov = from_faer(llt.inverse().as_ref());
    let norm1 = |m: ArrayView2<'_, f64>| {
        m.columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let rcond = 1.0 / (norm1((-&h).view()) * norm1(cov.view()));
    if rcond.is_nan() || rcond < MIN_INFORMATION_RCOND {
        return Err(Error::SingularInformation);
    }
    let diag = cov.diag();
    if diag.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(Error::SingularInformation);
    }
    let se = diag.mapv(f64::sqrt);
    Ok((cov, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn covariance_examples() {
        let (cov, se) = covariance_from_hessian((-Array2::<f64>::eye(3)).view()).unwrap();
        assert_eq!(cov, Array2::<f64>::eye(3));
        assert_eq!(se, array![1.0, 1.0, 1.0]);

        // -H = [[4, 2], [2, 3]] has inverse [[3, -2], [-2, 4]] / 8
        let (cov, se) = covariance_from_hessian(array![[-4.0, -2.0], [-2.0, -3.0]].view()).unwrap();
        let expected = array![[0.375, -0.25], [-0.25, 0.5]];
        assert!((&cov - &expected).iter().all(|d| d.abs() < 1e-14));
        assert!((se[0] - 0.375f64.sqrt()).abs() < 1e-14);

        assert_eq!(
            covariance_from_hessian(array![[-1.0, 0.0], [0.0, 1.0]].view()),
            Err(Error::SingularInformation)
        );
        assert_eq!(
            covariance_from_hessian(array![[-1.0, -1.0], [-1.0, -1.0]].view()),
            Err(Error::SingularInformation)
        );
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            rho_bounds: (0.5, -0.5),
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
