//! The lag operator `M = I - rho W` and the solves the spatial likelihood needs.

use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use ndarray::{Array2, ArrayView2};

use super::weights::SpatialWeights;
use crate::error::{Error, Result};

/// Factorizations whose reciprocal condition estimate falls below this are
/// reported as [`Error::SingularLag`].
pub const MIN_RCOND: f64 = 1e-14;

pub(crate) fn to_faer(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// A factorized `M = I - rho W` for one value of `rho`.
///
/// When `rho = 0` or `W = 0` no factorization is stored and solves return
/// their right-hand side unchanged.
pub struct LagAlgebra<'w> {
    w: &'w SpatialWeights,
    rho: f64,
    lu: Option<PartialPivLu<f64>>,
    rcond: f64,
}

/// `U`, `V` and `Q` of the spatial derivatives, with `Xtilde = M^-1 X`.
#[derive(Debug, Clone)]
pub struct LagTerms {
    pub x_tilde: Array2<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub q: Array2<f64>,
}

impl<'w> LagAlgebra<'w> {
    pub fn new(w: &'w SpatialWeights, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::RhoOutOfRange(rho));
        }
        if rho == 0.0 || w.is_zero() {
            return Ok(Self {
                w,
                rho,
                lu: None,
                rcond: 1.0,
            });
        }
        let n = w.n();
        let weights = w.weights();
        let m = Mat::from_fn(n, n, |i, j| {
            let identity = if i == j { 1.0 } else { 0.0 };
            identity - rho * weights[[i, j]]
        });
        let norm1 = (0..n)
            .map(|j| (0..n).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu = m.partial_piv_lu();
        let inv_norm1 = hager_inverse_norm1(&lu, n);
        let rcond = 1.0 / (norm1 * inv_norm1);
        if rcond.is_nan() || rcond < MIN_RCOND {
            return Err(Error::SingularLag { rho, rcond: if rcond.is_nan() { 0.0 } else { rcond } });
        }
        Ok(Self {
            w,
            rho,
            lu: Some(lu),
            rcond,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn weights(&self) -> &'w SpatialWeights {
        self.w
    }

    /// Reciprocal 1-norm condition estimate of `M`.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    /// The solution `T` of `M T = A`.
    pub fn solve(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        match &self.lu {
            None => a.to_owned(),
            Some(lu) => from_faer(lu.solve(to_faer(a)).as_ref()),
        }
    }

    /// `W A`.
    pub fn apply_w(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        self.w.weights().dot(&a)
    }

    /// `M^-1 X` together with `U = M^-1 W M^-1 X beta`, `V = M^-1 W U` and
    /// `Q = M^-1 W M^-1 X`.
    pub fn derivative_terms(&self, x: ArrayView2<'_, f64>, beta: ArrayView2<'_, f64>) -> LagTerms {
        let x_tilde = self.solve(x);
        let wx = self.apply_w(x_tilde.view());
        let q = self.solve(wx.view());
        let u = self.solve(self.apply_w(x_tilde.dot(&beta).view()).view());
        let v = self.solve(self.apply_w(u.view()).view());
        LagTerms { x_tilde, u, v, q }
    }
}

/// Hager's estimate of `||M^-1||_1` from a factorization of `M`.
fn hager_inverse_norm1(lu: &PartialPivLu<f64>, n: usize) -> f64 {
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut estimate = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = lu.solve(&x);
        estimate = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        if !estimate.is_finite() {
            return f64::INFINITY;
        }
        let xi = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let (j, zmax) = (0..n)
            .map(|i| (i, z[(i, 0)].abs()))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = Mat::<f64>::zeros(n, 1);
        x[(j, 0)] = 1.0;
    }
    estimate
}

/// Solution `T` of `(I - rho W) T = A`.
pub fn lag_transform(w: &SpatialWeights, rho: f64, a: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_rows(w, a)?;
    Ok(LagAlgebra::new(w, rho)?.solve(a))
}

/// `(U, V, Q)` at `rho`; see [`LagAlgebra::derivative_terms`].
pub fn lag_derivative_terms(
    w: &SpatialWeights,
    rho: f64,
    x: ArrayView2<'_, f64>,
    beta: ArrayView2<'_, f64>,
) -> Result<LagTerms> {
    check_rows(w, x)?;
    Ok(LagAlgebra::new(w, rho)?.derivative_terms(x, beta))
}

pub(crate) fn check_rows(w: &SpatialWeights, a: ArrayView2<'_, f64>) -> Result<()> {
    if a.nrows() != w.n() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {n}x{n} but the matrix has {} rows",
            a.nrows(),
            n = w.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::weights::row_normalize;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(a: &Array2<f64>) -> f64 {
        a.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> SpatialWeights {
        let mut m = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
        for i in 0..n {
            m[[i, i]] = 0.0;
        }
        SpatialWeights::from_dense(m).unwrap()
    }

    /// Dense inverse by Gauss-Jordan, used only as an oracle.
    fn inverse(a: &Array2<f64>) -> Array2<f64> {
        let n = a.nrows();
        let mut aug = Array2::zeros((n, 2 * n));
        for i in 0..n {
            for j in 0..n {
                aug[[i, j]] = a[[i, j]];
            }
            aug[[i, n + i]] = 1.0;
        }
        for c in 0..n {
            let p = (c..n)
                .max_by(|&x, &y| aug[[x, c]].abs().total_cmp(&aug[[y, c]].abs()))
                .unwrap();
            for j in 0..2 * n {
                aug.swap([c, j], [p, j]);
            }
            let d = aug[[c, c]];
            for j in 0..2 * n {
                aug[[c, j]] /= d;
            }
            for r in (0..n).filter(|&r| r != c) {
                let f = aug[[r, c]];
                for j in 0..2 * n {
                    aug[[r, j]] -= f * aug[[c, j]];
                }
            }
        }
        aug.slice(ndarray::s![.., n..]).to_owned()
    }

    #[test]
    fn rho_zero_is_identity() {
        let w = SpatialWeights::from_dense(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let a = array![[1.5, -2.0], [0.25, 3.0]];
        assert_eq!(lag_transform(&w, 0.0, a.view()).unwrap(), a);
    }

    #[test]
    fn two_by_two_hand_inverse() {
        let w = SpatialWeights::from_dense(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let t = lag_transform(&w, 0.5, array![[1.0], [0.0]].view()).unwrap();
        assert!((t[[0, 0]] - 4.0 / 3.0).abs() < 1e-14);
        assert!((t[[1, 0]] - 2.0 / 3.0).abs() < 1e-14);
        assert!(matches!(
            lag_transform(&w, 1.0, array![[1.0], [0.0]].view()),
            Err(Error::SingularLag { .. })
        ));
        assert_eq!(
            lag_transform(&w, 1.5, array![[1.0], [0.0]].view()).unwrap_err(),
            Error::RhoOutOfRange(1.5)
        );
    }

    #[test]
    fn derivative_terms_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_weights(&mut rng, 4);
        let x = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
        let beta = array![[0.0, 0.5, -1.0], [0.0, 2.0, 0.3]];
        let t = lag_derivative_terms(&w, 0.0, x.view(), beta.view()).unwrap();
        let wx = w.weights().dot(&x);
        assert!(max_abs(&(&t.q - &wx)) < 1e-15);
        assert!(max_abs(&(&t.u - &wx.dot(&beta))) < 1e-14);

        let t = lag_derivative_terms(&w, 0.3, x.view(), Array2::zeros((2, 3)).view()).unwrap();
        assert_eq!(max_abs(&t.u), 0.0);
        assert_eq!(max_abs(&t.v), 0.0);
    }

    #[test]
    fn derivative_terms_match_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 3;
        let w = random_weights(&mut rng, n);
        let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
        let beta = Array2::from_shape_fn((2, 3), |(_, j)| {
            if j == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }
        });
        let rho = 0.37;
        let m = Array2::eye(n) - rho * &w.weights();
        let minv = inverse(&m);
        let wm = w.weights().dot(&minv);
        let q = minv.dot(&wm).dot(&x);
        let u = q.dot(&beta);
        let v = minv.dot(&w.weights()).dot(&u);
        let t = lag_derivative_terms(&w, rho, x.view(), beta.view()).unwrap();
        assert!(max_abs(&(&t.x_tilde - &minv.dot(&x))) < 1e-10);
        assert!(max_abs(&(&t.q - &q)) < 1e-10);
        assert!(max_abs(&(&t.u - &u)) < 1e-10);
        assert!(max_abs(&(&t.v - &v)) < 1e-10);
    }

    #[test]
    fn row_normalized_lag_is_never_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..12);
            let w = row_normalize(random_weights(&mut rng, n));
            let rho = rng.random_range(-0.99..0.99);
            assert!(LagAlgebra::new(&w, rho).is_ok());
        }
    }

    #[test]
    fn rcond_estimate_is_accurate_on_small_case() {
        let w = SpatialWeights::from_dense(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let lag = LagAlgebra::new(&w, 0.5).unwrap();
        // ||M||_1 = 1.5 and ||M^-1||_1 = 2, so rcond = 1/3
        assert!((lag.rcond() - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lag_transform_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 5;
            let w = row_normalize(random_weights(&mut rng, n));
            let rho = rng.random_range(-0.9..0.9);
            let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
            let y = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
            let lhs = lag_transform(&w, rho, (a * &x + b * &y).view()).unwrap();
            let rhs = a * lag_transform(&w, rho, x.view()).unwrap()
                + b * lag_transform(&w, rho, y.view()).unwrap();
            prop_assert!(max_abs(&(&lhs - &rhs)) < 1e-10);
        }

        #[test]
        fn u_is_derivative_of_lagged_predictor(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let w = row_normalize(random_weights(&mut rng, n));
            let rho = rng.random_range(-0.8..0.8);
            let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
            let beta = Array2::from_shape_fn((2, 3), |(_, j)| {
                if j == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }
            });
            let h = 1e-6;
            let xb = x.dot(&beta);
            let fd = (lag_transform(&w, rho + h, xb.view()).unwrap()
                - lag_transform(&w, rho - h, xb.view()).unwrap())
                / (2.0 * h);
            let t = lag_derivative_terms(&w, rho, x.view(), beta.view()).unwrap();
            prop_assert!(max_abs(&(&fd - &t.u)) < 1e-5);
            prop_assert!(max_abs(&(&t.q.dot(&beta) - &t.u)) < 1e-10);

            let du = (lag_derivative_terms(&w, rho + h, x.view(), beta.view()).unwrap().u
                - lag_derivative_terms(&w, rho - h, x.view(), beta.view()).unwrap().u)
                / (2.0 * h);
            prop_assert!(max_abs(&(&du - &(2.0 * &t.v))) < 1e-5);
        }
    }
}
