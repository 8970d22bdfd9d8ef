//! Spatial weights matrices and their builders.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::compdata::check_finite;
use crate::error::{Error, Result};

/// How a weights matrix was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    Band { k: usize },
    Knn { k: usize },
    InverseDistance { cutoff: f64 },
    UserSupplied,
}

/// A nonnegative `n x n` weights matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialWeights {
    weights: Array2<f64>,
    row_normalized: bool,
    construction: Construction,
    zero_rows: Vec<usize>,
}

impl SpatialWeights {
    /// Validates a user-supplied dense matrix.
    pub fn from_dense(weights: Array2<f64>) -> Result<Self> {
        let (rows, cols) = weights.dim();
        if rows != cols {
            return Err(Error::NonSquare { rows, cols });
        }
        if rows == 0 {
            return Err(Error::Empty);
        }
        check_finite(weights.view())?;
        for ((row, col), &w) in weights.indexed_iter() {
            if w < 0.0 {
                return Err(Error::NegativeWeight { row, col });
            }
            if row == col && w != 0.0 {
                return Err(Error::NonzeroDiagonal(row));
            }
        }
        let zero_rows = find_zero_rows(weights.view());
        Ok(Self {
            weights,
            row_normalized: false,
            construction: Construction::UserSupplied,
            zero_rows,
        })
    }

    /// The all-zero matrix: the lag is inert for every `rho`.
    pub fn zeros(n: usize) -> Self {
        Self {
            weights: Array2::zeros((n, n)),
            row_normalized: false,
            construction: Construction::UserSupplied,
            zero_rows: (0..n).collect(),
        }
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn row_normalized(&self) -> bool {
        self.row_normalized
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    /// Rows without any neighbour.
    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn is_zero(&self) -> bool {
        self.zero_rows.len() == self.n()
    }

    /// The sub-matrix on `rows` x `rows`, keeping the construction tag.
    pub fn select(&self, rows: &[usize]) -> Self {
        let weights = self.weights.select(Axis(0), rows).select(Axis(1), rows);
        let zero_rows = find_zero_rows(weights.view());
        Self {
            weights,
            row_normalized: self.row_normalized,
            construction: self.construction,
            zero_rows,
        }
    }
}

fn find_zero_rows(w: ArrayView2<'_, f64>) -> Vec<usize> {
    w.axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, row)| row.iter().all(|&v| v == 0.0))
        .map(|(i, _)| i)
        .collect()
}

/// `W_ij = 1/k` when `1 <= |i - j| <= k`. Rows are not normalized, so the
/// first and last `k` rows sum to less than one.
pub fn build_band_weights(n: usize, k: usize) -> Result<SpatialWeights> {
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    let w = 1.0 / k as f64;
    let mut weights = Array2::zeros((n, n));
    for i in 0..n {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(n - 1);
        for j in lo..=hi {
            if j != i {
                weights[[i, j]] = w;
            }
        }
    }
    Ok(SpatialWeights {
        weights,
        row_normalized: false,
        construction: Construction::Band { k },
        zero_rows: Vec::new(),
    })
}

fn check_coords(coords: ArrayView2<'_, f64>) -> Result<()> {
    if coords.nrows() == 0 {
        return Err(Error::Empty);
    }
    if coords.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "coordinates need 2 columns, got {}",
            coords.ncols()
        )));
    }
    check_finite(coords)
}

fn distance(coords: ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    let dx = coords[[i, 0]] - coords[[j, 0]];
    let dy = coords[[i, 1]] - coords[[j, 1]];
    dx.hypot(dy)
}

/// Each row puts `1/k` on its `k` nearest points by Euclidean distance, ties
/// going to the lower index.
pub fn build_knn_weights(coords: ArrayView2<'_, f64>, k: usize) -> Result<SpatialWeights> {
    check_coords(coords)?;
    let n = coords.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidK { k, n });
    }
    let w = 1.0 / k as f64;
    let mut weights = Array2::zeros((n, n));
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        for j in (0..n).filter(|&j| j != i) {
            let d = distance(coords, i, j);
            if d == 0.0 {
                return Err(Error::DuplicatePoints { i: i.min(j), j: i.max(j) });
            }
            order.push((d, j));
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &order[..k] {
            weights[[i, j]] = w;
        }
    }
    Ok(SpatialWeights {
        weights,
        row_normalized: true,
        construction: Construction::Knn { k },
        zero_rows: Vec::new(),
    })
}

/// `W_ij = 1/d(i, j)` for `d(i, j) <= cutoff`, then row-normalized.
pub fn build_inverse_distance_weights(
    coords: ArrayView2<'_, f64>,
    cutoff: f64,
) -> Result<SpatialWeights> {
    check_coords(coords)?;
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::InvalidConfig(format!("cutoff must be positive, got {cutoff}")));
    }
    let n = coords.nrows();
    let mut weights = Array2::zeros((n, n));
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let d = distance(coords, i, j);
            if d == 0.0 {
                return Err(Error::ZeroDistance { i: i.min(j), j: i.max(j) });
            }
            if d <= cutoff {
                weights[[i, j]] = 1.0 / d;
            }
        }
        if weights.row(i).iter().all(|&v| v == 0.0) {
            return Err(Error::IsolatedPoint(i));
        }
    }
    let raw = SpatialWeights {
        weights,
        row_normalized: false,
        construction: Construction::InverseDistance { cutoff },
        zero_rows: Vec::new(),
    };
    Ok(row_normalize(raw))
}

/// Divides every nonzero row by its sum; all-zero rows pass through and are
/// listed in [`SpatialWeights::zero_rows`].
pub fn row_normalize(mut w: SpatialWeights) -> SpatialWeights {
    for mut row in w.weights.axis_iter_mut(Axis(0)) {
        let sum = row.sum();
        if sum > 0.0 && sum != 1.0 {
            row.mapv_inplace(|v| v / sum);
        }
    }
    w.zero_rows = find_zero_rows(w.weights.view());
    w.row_normalized = true;
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn band_examples() {
        let w = build_band_weights(4, 1).unwrap();
        assert_eq!(
            w.weights(),
            array![
                [0.0, 1.0, 0.0, 0.0],
                [1.0, 0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0, 1.0],
                [0.0, 0.0, 1.0, 0.0]
            ]
        );
        assert_eq!(build_band_weights(5, 5), Err(Error::InvalidK { k: 5, n: 5 }));
        assert_eq!(build_band_weights(5, 0), Err(Error::InvalidK { k: 0, n: 5 }));
        let w = build_band_weights(3, 2).unwrap();
        assert_eq!(w.weights().row(0), array![0.0, 0.5, 0.5]);
        assert_eq!(w.weights().row(1), array![0.5, 0.0, 0.5]);
        assert!(!w.row_normalized());
    }

    #[test]
    fn band_boundary_rows_are_short() {
        let w = build_band_weights(20, 5).unwrap();
        assert!((w.weights().row(0).sum() - 1.0).abs() < 1e-15);
        assert!((w.weights().row(10).sum() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn knn_examples() {
        let coords = array![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [10.0, 0.0]];
        let w = build_knn_weights(coords.view(), 1).unwrap();
        assert_eq!(w.weights()[[2, 1]], 1.0);
        assert_eq!(w.weights()[[3, 2]], 1.0);
        // point 1 ties between 0 and 2; lower index wins
        assert_eq!(w.weights()[[1, 0]], 1.0);
        assert_eq!(w.weights()[[1, 2]], 0.0);

        let w = build_knn_weights(array![[0.0, 0.0], [3.0, 4.0]].view(), 1).unwrap();
        assert_eq!(w.weights(), array![[0.0, 1.0], [1.0, 0.0]]);

        assert!(matches!(
            build_knn_weights(array![[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]].view(), 1),
            Err(Error::DuplicatePoints { i: 0, j: 1 })
        ));
        assert!(matches!(
            build_knn_weights(coords.view(), 4),
            Err(Error::InvalidK { .. })
        ));
    }

    #[test]
    fn knn_ties_follow_enumerated_oracle() {
        // a square with its centre: every corner is at distance 1 from the
        // two adjacent corners and sqrt(0.5) from the centre
        let coords = array![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let k = 2;
        let w = build_knn_weights(coords.view(), k).unwrap();
        for i in 0..5 {
            let mut d: Vec<(f64, usize)> = (0..5)
                .filter(|&j| j != i)
                .map(|j| (distance(coords.view(), i, j), j))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<usize> = d[..k].iter().map(|x| x.1).collect();
            let got: Vec<usize> = (0..5).filter(|&j| w.weights()[[i, j]] > 0.0).collect();
            let mut expected_sorted = expected.clone();
            expected_sorted.sort();
            assert_eq!(got, expected_sorted, "row {i}");
        }
        // the centre has four tied corners and keeps the two lowest indices
        assert_eq!(w.weights().row(4), array![0.5, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn inverse_distance_examples() {
        let coords = array![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        let w = build_inverse_distance_weights(coords.view(), 2.0).unwrap();
        assert_eq!(w.weights().row(0), array![0.0, 1.0, 0.0]);
        let r1 = w.weights().row(1).to_owned();
        assert!((r1[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r1[2] - 1.0 / 3.0).abs() < 1e-15);
        assert!(w.row_normalized());

        assert_eq!(
            build_inverse_distance_weights(coords.view(), 0.5),
            Err(Error::IsolatedPoint(0))
        );
        assert!(matches!(
            build_inverse_distance_weights(array![[0.0, 0.0], [0.0, 0.0]].view(), 1.0),
            Err(Error::ZeroDistance { .. })
        ));
    }

    #[test]
    fn row_normalize_examples() {
        let w = SpatialWeights::from_dense(array![
            [0.0, 2.0, 2.0],
            [1.0, 0.0, 0.0],
            [0.0, 3.0, 0.0]
        ])
        .unwrap();
        let r = row_normalize(w);
        assert_eq!(
            r.weights(),
            array![[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
        );
        assert_eq!(row_normalize(r.clone()), r);

        let z = row_normalize(
            SpatialWeights::from_dense(array![[0.0, 0.0], [4.0, 0.0]]).unwrap(),
        );
        assert_eq!(z.weights(), array![[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(z.zero_rows(), &[0]);
    }

    #[test]
    fn from_dense_validation() {
        assert_eq!(
            SpatialWeights::from_dense(Array2::zeros((2, 3))),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        );
        assert_eq!(
            SpatialWeights::from_dense(array![[0.0, -1.0], [1.0, 0.0]]),
            Err(Error::NegativeWeight { row: 0, col: 1 })
        );
        assert_eq!(
            SpatialWeights::from_dense(array![[0.0, 1.0], [1.0, 0.1]]),
            Err(Error::NonzeroDiagonal(1))
        );
    }

    proptest! {
        #[test]
        fn row_normalized_rows_sum_to_one(
            raw in proptest::collection::vec(0.0f64..5.0, 16),
        ) {
            let mut m = Array2::from_shape_vec((4, 4), raw).unwrap();
            for i in 0..4 {
                m[[i, i]] = 0.0;
            }
            let w = row_normalize(SpatialWeights::from_dense(m).unwrap());
            for (i, row) in w.weights().axis_iter(Axis(0)).enumerate() {
                if w.zero_rows().contains(&i) {
                    prop_assert_eq!(row.sum(), 0.0);
                } else {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
