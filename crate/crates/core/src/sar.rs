//! Spatial-lag Dirichlet regression: the non-spatial likelihood evaluated at
//! `Xtilde = M^-1 X` with `M = I - rho W`, plus the `rho` derivatives.
//!
//! `d eta / d rho = U`, `d2 eta / d rho2 = 2V` and `d2 eta_ic / d rho d beta_pc = Q_ip`,
//! so the `rho` row of the Hessian is a contraction of the linear-predictor
//! curvature with `U`, `V` and `Q`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::compdata::CompositionMatrix;
use crate::dirichlet::{
    add_core_blocks, beta_gradient_from, fill_gradient, link_mu, link_phi, loglik, obs_curvature,
    scores, state_from, LinkedState, ModelParams, ParamLayout, Scores,
};
use crate::error::{Error, Result};
use crate::spatial::lag::check_rows;
use crate::spatial::{LagAlgebra, SpatialWeights};

/// Everything the spatial likelihood and its derivatives need at one point.
#[derive(Debug, Clone)]
pub struct SpatialLinkedState {
    pub base: LinkedState,
    pub rho: f64,
    pub x_tilde: Array2<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub q: Array2<f64>,
    /// `Omega_ij = mu_ij U_ij`.
    pub omega: Array2<f64>,
    /// `sum_j Omega_ij`.
    pub omega_sum: Array1<f64>,
}

impl SpatialLinkedState {
    pub fn layout(&self, kz: usize) -> ParamLayout {
        ParamLayout {
            k: self.x_tilde.ncols(),
            j: self.base.mu.ncols(),
            kz,
            spatial: true,
        }
    }
}

/// The linked state at `params`, whose `rho` defaults to 0 when absent.
pub fn spatial_link(
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    w: &SpatialWeights,
    params: &ModelParams,
) -> Result<SpatialLinkedState> {
    check_rows(w, x)?;
    let lag = LagAlgebra::new(w, params.rho.unwrap_or(0.0))?;
    spatial_link_with(&lag, x, z, params)
}

/// As [`spatial_link`] with an existing factorization; `params.rho` is
/// ignored in favour of `lag.rho()`.
pub fn spatial_link_with(
    lag: &LagAlgebra<'_>,
    x: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    params: &ModelParams,
) -> Result<SpatialLinkedState> {
    check_rows(lag.weights(), x)?;
    if z.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows but Z has {}",
            x.nrows(),
            z.nrows()
        )));
    }
    let terms = lag.derivative_terms(x, params.beta.view());
    let mu = link_mu(terms.x_tilde.view(), params.beta.view())?;
    let phi = link_phi(z, params.gamma.view())?;
    let omega = &mu * &terms.u;
    let omega_sum = omega.sum_axis(Axis(1));
    Ok(SpatialLinkedState {
        base: state_from(mu, phi),
        rho: lag.rho(),
        x_tilde: terms.x_tilde,
        u: terms.u,
        v: terms.v,
        q: terms.q,
        omega,
        omega_sum,
    })
}

pub fn spatial_loglik(y: &CompositionMatrix, state: &SpatialLinkedState) -> Result<f64> {
    loglik(y, &state.base)
}

fn rho_gradient_from(state: &SpatialLinkedState, sc: &Scores) -> f64 {
    (&sc.g_eta * &state.u).sum()
}

/// Derivative of the log-likelihood in `rho`.
pub fn grad_rho(y: &CompositionMatrix, state: &SpatialLinkedState) -> Result<f64> {
    let sc = scores(y, &state.base)?;
    Ok(rho_gradient_from(state, &sc))
}

/// [`crate::dirichlet::grad_beta`] with `Xtilde` in place of `X`.
pub fn grad_beta_spatial(y: &CompositionMatrix, state: &SpatialLinkedState) -> Result<Array2<f64>> {
    let sc = scores(y, &state.base)?;
    Ok(beta_gradient_from(state.x_tilde.view(), &sc))
}

pub fn grad_gamma_spatial(
    y: &CompositionMatrix,
    z: ArrayView2<'_, f64>,
    state: &SpatialLinkedState,
) -> Result<Array1<f64>> {
    crate::dirichlet::grad_gamma(y, z, &state.base)
}

/// Gradient over free `beta`, `gamma` and `rho`.
pub fn spatial_gradient(
    y: &CompositionMatrix,
    z: ArrayView2<'_, f64>,
    state: &SpatialLinkedState,
) -> Result<Array1<f64>> {
    let sc = scores(y, &state.base)?;
    let layout = state.layout(z.ncols());
    let mut out = Array1::zeros(layout.len());
    fill_gradient(&layout, state.x_tilde.view(), z, &sc, &mut out);
    out[layout.n_beta() + layout.kz] = rho_gradient_from(state, &sc);
    Ok(out)
}

/// `F_ij = ln y_ij (U_ij - Omega_i)` and
/// `G_ij = U_ij (psi(alpha_ij) - sum_j' mu_ij' psi(alpha_ij'))`.
pub fn f_g(y: &CompositionMatrix, state: &SpatialLinkedState) -> Result<(Array2<f64>, Array2<f64>)> {
    let sc = scores(y, &state.base)?;
    let (n, j) = state.u.dim();
    let mut f = Array2::zeros((n, j));
    let mut g = Array2::zeros((n, j));
    for i in 0..n {
        let psi_bar: f64 = (0..j)
            .map(|c| state.base.mu[[i, c]] * sc.psi_alpha[[i, c]])
            .sum();
        for c in 0..j {
            f[[i, c]] = sc.log_y[[i, c]] * (state.u[[i, c]] - state.omega_sum[i]);
            g[[i, c]] = state.u[[i, c]] * (sc.psi_alpha[[i, c]] - psi_bar);
        }
    }
    Ok((f, g))
}

/// Full Hessian over free `beta`, `gamma` and `rho`, in [`ParamLayout`] order.
pub fn hessian_spatial(
    y: &CompositionMatrix,
    z: ArrayView2<'_, f64>,
    state: &SpatialLinkedState,
) -> Result<Array2<f64>> {
    let n = state.base.phi.len();
    if z.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "Z has {} rows, expected {n}",
            z.nrows()
        )));
    }
    let sc = scores(y, &state.base)?;
    let layout = state.layout(z.ncols());
    let r = layout.n_beta() + layout.kz;
    let j = layout.j;
    let mut h = Array2::zeros((layout.len(), layout.len()));
    for i in 0..n {
        let curv = obs_curvature(&state.base, &sc, i)?;
        let xt = state.x_tilde.row(i);
        add_core_blocks(&layout, xt, z.row(i), &curv, &mut h);

        let u = state.u.row(i);
        let hu = curv.eta_eta.dot(&u);
        let mut rr = 0.0;
        for c in 0..j {
            rr += u[c] * hu[c] + 2.0 * sc.g_eta[[i, c]] * state.v[[i, c]];
        }
        h[[r, r]] += rr;
        for d in 1..j {
            for p in 0..layout.k {
                let a = layout.beta_index(p, d);
                let val = xt[p] * hu[d] + sc.g_eta[[i, d]] * state.q[[i, p]];
                h[[a, r]] += val;
                h[[r, a]] += val;
            }
        }
        let tu: f64 = curv.eta_tau.dot(&u);
        for k in 0..layout.kz {
            let b = layout.gamma_index(k);
            h[[b, r]] += z[[i, k]] * tu;
            h[[r, b]] += z[[i, k]] * tu;
        }
    }
    Ok(h)
}
