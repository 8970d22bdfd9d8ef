//! Non-spatial Dirichlet regression in the `(mu, phi)` parametrization:
//! softmax link for the mean, log link for the precision.
//!
//! Derivatives are formed in the linear predictors first. With
//! `s_ij = ln y_ij - psi(alpha_ij)` and `sbar_i = sum_j mu_ij s_ij` the
//! per-observation score in `eta_ic = [X beta]_ic` is
//! `phi_i mu_ic (s_ic - sbar_i)` and the score in `ln phi_i` is
//! `phi_i (psi(phi_i) + sbar_i)`; the `beta` and `gamma` gradients and every
//! Hessian block are contractions of these with the designs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::compdata::CompositionMatrix;
use crate::error::{Error, Result};
use crate::specfun::{digamma, ln_gamma, trigamma};

/// Largest linear predictor accepted by the precision link.
pub const MAX_EXP_ARGUMENT: f64 = 700.0;

/// Regression coefficients. Column 0 of `beta` is the reference class and is
/// identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Array2<f64>,
    pub gamma: Array1<f64>,
    pub rho: Option<f64>,
}

impl ModelParams {
    pub fn new(beta: Array2<f64>, gamma: Array1<f64>, rho: Option<f64>) -> Result<Self> {
        if beta.ncols() < 2 {
            return Err(Error::TooFewClasses {
                min: 2,
                got: beta.ncols(),
            });
        }
        if beta.column(0).iter().any(|&b| b != 0.0) {
            return Err(Error::UnpinnedReferenceColumn);
        }
        crate::compdata::check_finite(beta.view())?;
        if let Some(i) = gamma.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        if let Some(r) = rho {
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::RhoOutOfRange(r));
            }
        }
        Ok(Self { beta, gamma, rho })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        Self {
            beta: Array2::zeros((layout.k, layout.j)),
            gamma: Array1::zeros(layout.kz),
            rho: layout.spatial.then_some(0.0),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            k: self.beta.nrows(),
            j: self.beta.ncols(),
            kz: self.gamma.len(),
            spatial: self.rho.is_some(),
        }
    }
}

/// Ordering of the free parameters: `beta[p, d]` for `d = 1..J` column by
/// column (index `(d - 1) K + p`), then `gamma`, then `rho` when spatial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub k: usize,
    pub j: usize,
    pub kz: usize,
    pub spatial: bool,
}

impl ParamLayout {
    pub fn n_beta(&self) -> usize {
        self.k * (self.j - 1)
    }

    pub fn beta_index(&self, p: usize, d: usize) -> usize {
        debug_assert!(d >= 1 && d < self.j && p < self.k);
        (d - 1) * self.k + p
    }

    pub fn gamma_index(&self, k: usize) -> usize {
        self.n_beta() + k
    }

    pub fn rho_index(&self) -> Option<usize> {
        self.spatial.then(|| self.n_beta() + self.kz)
    }

    pub fn len(&self) -> usize {
        self.n_beta() + self.kz + usize::from(self.spatial)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        for d in 1..self.j {
            for p in 0..self.k {
                names.push(format!("beta[{p},{d}]"));
            }
        }
        names.extend((0..self.kz).map(|k| format!("gamma[{k}]")));
        if self.spatial {
            names.push("rho".to_owned());
        }
        names
    }

    pub fn pack(&self, params: &ModelParams) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        for d in 1..self.j {
            theta.extend(params.beta.column(d).iter());
        }
        theta.extend(params.gamma.iter());
        if self.spatial {
            theta.push(params.rho.unwrap_or(0.0));
        }
        theta
    }

    pub fn unpack(&self, theta: &[f64]) -> ModelParams {
        debug_assert_eq!(theta.len(), self.len());
        let mut beta = Array2::zeros((self.k, self.j));
        for d in 1..self.j {
            for p in 0..self.k {
                beta[[p, d]] = theta[self.beta_index(p, d)];
            }
        }
        let gamma = Array1::from_iter((0..self.kz).map(|k| theta[self.gamma_index(k)]));
        let rho = self.rho_index().map(|i| theta[i]);
        ModelParams { beta, gamma, rho }
    }
}

/// `mu`, `phi` and `alpha = phi mu` at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedState {
    pub mu: Array2<f64>,
    pub phi: Array1<f64>,
    pub alpha: Array2<f64>,
}

/// Row-wise softmax of `xeff beta`, shifted by the row maximum.
pub fn link_mu(xeff: ArrayView2<'_, f64>, beta: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if xeff.ncols() != beta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} columns but beta has {} rows",
            xeff.ncols(),
            beta.nrows()
        )));
    }
    if beta.column(0).iter().any(|&b| b != 0.0) {
        return Err(Error::UnpinnedReferenceColumn);
    }
    let mut eta = xeff.dot(&beta);
    for (i, mut row) in eta.axis_iter_mut(Axis(0)).enumerate() {
        softmax_in_place(row.view_mut()).ok_or(Error::NonFiniteLinearPredictor(i))?;
    }
    Ok(eta)
}

pub(crate) fn softmax_in_place(mut row: ndarray::ArrayViewMut1<'_, f64>) -> Option<()> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || row.iter().any(|v| !v.is_finite()) {
        return None;
    }
    row.mapv_inplace(|v| (v - max).exp());
    let sum = row.sum();
    row.mapv_inplace(|v| v / sum);
    Some(())
}

/// `phi_i = exp([Z gamma]_i)`.
pub fn link_phi(z: ArrayView2<'_, f64>, gamma: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if z.ncols() != gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} columns but gamma has {} entries",
            z.ncols(),
            gamma.len()
        )));
    }
    let lin = z.dot(&gamma);
    lin.iter()
        .enumerate()
        .map(|(row, &value)| {
            if !value.is_finite() {
                Err(Error::NonFiniteLinearPredictor(row))
            } else if value > MAX_EXP_ARGUMENT {
                Err(Error::Overflow { row, value })
            } else {
                Ok(value.exp())
            }
        })
        .collect()
}

pub fn link(
    xeff: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    params: &ModelParams,
) -> Result<LinkedState> {
    if xeff.nrows() != z.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but Z has {}",
            xeff.nrows(),
            z.nrows()
        )));
    }
    let mu = link_mu(xeff, params.beta.view())?;
    let phi = link_phi(z, params.gamma.view())?;
    Ok(state_from(mu, phi))
}

pub(crate) fn state_from(mu: Array2<f64>, phi: Array1<f64>) -> LinkedState {
    let mut alpha = mu.clone();
    Zip::from(alpha.rows_mut())
        .and(&phi)
        .for_each(|mut row, &p| row *= p);
    LinkedState { mu, phi, alpha }
}

fn check_shapes(y: &CompositionMatrix, state: &LinkedState) -> Result<()> {
    if y.values().dim() != state.mu.dim() {
        return Err(Error::DimensionMismatch(format!(
            "labels are {:?} but mu is {:?}",
            y.values().dim(),
            state.mu.dim()
        )));
    }
    Ok(())
}

/// `ln y`, rejecting labels that are not strictly positive.
pub(crate) fn log_labels(y: &CompositionMatrix) -> Result<Array2<f64>> {
    let values = y.values();
    for ((row, col), &value) in values.indexed_iter() {
        if value.is_nan() || value <= 0.0 {
            return Err(Error::NonPositiveLabel { row, col, value });
        }
    }
    Ok(values.mapv(f64::ln))
}

/// Log-likelihood `sum_i [ln G(phi_i) - sum_j ln G(alpha_ij) + sum_j (alpha_ij - 1) ln y_ij]`.
pub fn loglik(y: &CompositionMatrix, state: &LinkedState) -> Result<f64> {
    check_shapes(y, state)?;
    let log_y = log_labels(y)?;
    let mut total = 0.0;
    for i in 0..state.phi.len() {
        let mut term = ln_gamma(state.phi[i])?;
        for j in 0..state.mu.ncols() {
            let a = state.alpha[[i, j]];
            term += (a - 1.0) * log_y[[i, j]] - ln_gamma(a)?;
        }
        total += term;
    }
    Ok(total)
}

/// Per-observation first-order quantities.
#[derive(Debug, Clone)]
pub(crate) struct Scores {
    pub s: Array2<f64>,
    pub sbar: Array1<f64>,
    pub psi_alpha: Array2<f64>,
    pub log_y: Array2<f64>,
    /// `d l_i / d eta_ic`.
    pub g_eta: Array2<f64>,
    /// `d l_i / d ln phi_i`.
    pub g_tau: Array1<f64>,
}

pub(crate) fn scores(y: &CompositionMatrix, state: &LinkedState) -> Result<Scores> {
    check_shapes(y, state)?;
    let log_y = log_labels(y)?;
    let (n, j) = state.mu.dim();
    let mut psi_alpha = Array2::zeros((n, j));
    for (p, &a) in psi_alpha.iter_mut().zip(state.alpha.iter()) {
        *p = digamma(a)?;
    }
    let s = &log_y - &psi_alpha;
    let sbar = (&s * &state.mu).sum_axis(Axis(1));
    let mut g_eta = Array2::zeros((n, j));
    let mut g_tau = Array1::zeros(n);
    for i in 0..n {
        let phi = state.phi[i];
        for c in 0..j {
            g_eta[[i, c]] = phi * state.mu[[i, c]] * (s[[i, c]] - sbar[i]);
        }
        g_tau[i] = phi * (digamma(phi)? + sbar[i]);
    }
    Ok(Scores {
        s,
        sbar,
        psi_alpha,
        log_y,
        g_eta,
        g_tau,
    })
}

/// Second-order quantities in the linear predictors of one observation.
#[derive(Debug, Clone)]
pub(crate) struct ObsCurvature {
    /// `d2 l_i / d eta_c d eta_d`.
    pub eta_eta: Array2<f64>,
    /// `d2 l_i / d eta_c d ln phi_i`.
    pub eta_tau: Array1<f64>,
    /// `d2 l_i / d (ln phi_i)^2`.
    pub tau_tau: f64,
}

pub(crate) fn obs_curvature(state: &LinkedState, sc: &Scores, i: usize) -> Result<ObsCurvature> {
    let j = state.mu.ncols();
    let phi = state.phi[i];
    let mu = state.mu.row(i);
    let psi1 = state
        .alpha
        .row(i)
        .iter()
        .map(|&a| trigamma(a))
        .collect::<Result<Array1<f64>>>()?;
    let t: f64 = mu.iter().zip(&psi1).map(|(m, p)| m * m * p).sum();
    let dev = Array1::from_iter((0..j).map(|c| sc.s[[i, c]] - sc.sbar[i]));
    let mut eta_eta = Array2::zeros((j, j));
    for c in 0..j {
        for d in 0..j {
            let delta = if c == d { 1.0 } else { 0.0 };
            eta_eta[[c, d]] = phi
                * mu[c]
                * ((delta - mu[d]) * dev[c] - phi * psi1[c] * mu[c] * (delta - mu[d])
                    - mu[d] * dev[d]
                    + phi * mu[d] * (mu[d] * psi1[d] - t));
        }
    }
    let eta_tau = Array1::from_iter(
        (0..j).map(|c| sc.g_eta[[i, c]] - phi * phi * mu[c] * (mu[c] * psi1[c] - t)),
    );
    let tau_tau = sc.g_tau[i] + phi * phi * (trigamma(phi)? - t);
    Ok(ObsCurvature {
        eta_eta,
        eta_tau,
        tau_tau,
    })
}

fn check_design(a: ArrayView2<'_, f64>, n: usize, what: &str) -> Result<()> {
    if a.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{what} has {} rows, expected {n}",
            a.nrows()
        )));
    }
    Ok(())
}

/// Gradient in `beta`, `K x J` with column 0 zero.
pub fn grad_beta(
    y: &CompositionMatrix,
    xeff: ArrayView2<'_, f64>,
    state: &LinkedState,
) -> Result<Array2<f64>> {
    check_design(xeff, state.phi.len(), "design")?;
    let sc = scores(y, state)?;
    Ok(beta_gradient_from(xeff, &sc))
}

pub(crate) fn beta_gradient_from(xeff: ArrayView2<'_, f64>, sc: &Scores) -> Array2<f64> {
    let mut g = xeff.t().dot(&sc.g_eta);
    g.column_mut(0).fill(0.0);
    g
}

/// Gradient in `gamma`.
pub fn grad_gamma(
    y: &CompositionMatrix,
    z: ArrayView2<'_, f64>,
    state: &LinkedState,
) -> Result<Array1<f64>> {
    check_design(z, state.phi.len(), "Z")?;
    let sc = scores(y, state)?;
    Ok(z.t().dot(&sc.g_tau))
}

/// Gradient over the free parameters of [`ParamLayout`] (no `rho`).
pub fn gradient(
    y: &CompositionMatrix,
    xeff: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    state: &LinkedState,
) -> Result<Array1<f64>> {
    check_design(xeff, state.phi.len(), "design")?;
    check_design(z, state.phi.len(), "Z")?;
    let sc = scores(y, state)?;
    let layout = ParamLayout {
        k: xeff.ncols(),
        j: state.mu.ncols(),
        kz: z.ncols(),
        spatial: false,
    };
    let mut out = Array1::zeros(layout.len());
    fill_gradient(&layout, xeff, z, &sc, &mut out);
    Ok(out)
}

pub(crate) fn fill_gradient(
    layout: &ParamLayout,
    xeff: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    sc: &Scores,
    out: &mut Array1<f64>,
) {
    let gb = beta_gradient_from(xeff, sc);
    for d in 1..layout.j {
        for p in 0..layout.k {
            out[layout.beta_index(p, d)] = gb[[p, d]];
        }
    }
    let gg = z.t().dot(&sc.g_tau);
    for k in 0..layout.kz {
        out[layout.gamma_index(k)] = gg[k];
    }
}

/// Analytic Hessian over free `beta` (column-major, classes `1..J`)
/// then `gamma`.
pub fn hessian(
    y: &CompositionMatrix,
    xeff: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    state: &LinkedState,
) -> Result<Array2<f64>> {
    check_design(xeff, state.phi.len(), "design")?;
    check_design(z, state.phi.len(), "Z")?;
    let sc = scores(y, state)?;
    let layout = ParamLayout {
        k: xeff.ncols(),
        j: state.mu.ncols(),
        kz: z.ncols(),
        spatial: false,
    };
    let mut h = Array2::zeros((layout.len(), layout.len()));
    for i in 0..state.phi.len() {
        let curv = obs_curvature(state, &sc, i)?;
        add_core_blocks(&layout, xeff.row(i), z.row(i), &curv, &mut h);
    }
    Ok(h)
}

/// Adds observation `i`'s `beta-beta`, `beta-gamma` and `gamma-gamma` terms.
pub(crate) fn add_core_blocks(
    layout: &ParamLayout,
    x: ArrayView1<'_, f64>,
    z: ArrayView1<'_, f64>,
    curv: &ObsCurvature,
    h: &mut Array2<f64>,
) {
    for d in 1..layout.j {
        for p in 0..layout.k {
            let a = layout.beta_index(p, d);
            for e in 1..layout.j {
                let hde = curv.eta_eta[[d, e]] * x[p];
                for q in 0..layout.k {
                    h[[a, layout.beta_index(q, e)]] += hde * x[q];
                }
            }
            let hdt = curv.eta_tau[d] * x[p];
            for k in 0..layout.kz {
                let b = layout.gamma_index(k);
                h[[a, b]] += hdt * z[k];
                h[[b, a]] += hdt * z[k];
            }
        }
    }
    for k in 0..layout.kz {
        for m in 0..layout.kz {
            h[[layout.gamma_index(k), layout.gamma_index(m)]] += curv.tau_tau * z[k] * z[m];
        }
    }
}
