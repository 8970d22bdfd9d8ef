//! Multinomial (cross-entropy) regression with the same softmax mean link
//! and optional spatial lag as the Dirichlet model, but no precision.
//!
//! With per-row weights `c_i` (1 for plain cross-entropy, `n_i` for trial
//! counts) the objective is `sum_i c_i sum_j y_ij ln p_ij`; its score in the
//! linear predictor is `c_i (y_ic - p_ic)` because the rows of `y` sum to 1.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::compdata::CompositionMatrix;
use crate::dirichlet::{link_mu, ModelParams, ParamLayout};
use crate::error::{Error, Result};
use crate::optim::fit::{finish, rho_bounds, run_maximize, FitNotes};
use crate::optim::{CovarianceSource, FitConfig, FitResult};
use crate::spatial::{LagAlgebra, SpatialWeights};

/// Number of trials behind each observed proportion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCounts {
    counts: Vec<u64>,
}

impl TrialCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty);
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidConfig(format!("trial count {i} is zero")));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            counts: rows.iter().map(|&i| self.counts[i]).collect(),
        }
    }
}

/// Class probabilities, the softmax of `xeff beta`.
pub fn link_p(xeff: ArrayView2<'_, f64>, beta: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    link_mu(xeff, beta)
}

fn check_same_shape(y: ArrayView2<'_, f64>, p: ArrayView2<'_, f64>) -> Result<()> {
    if y.dim() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "Y is {:?} but P is {:?}",
            y.dim(),
            p.dim()
        )));
    }
    Ok(())
}

fn weighted_log_score(
    y: ArrayView2<'_, f64>,
    p: ArrayView2<'_, f64>,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_same_shape(y, p)?;
    let mut total = 0.0;
    for (i, (yr, pr)) in y.rows().into_iter().zip(p.rows()).enumerate() {
        let mut row = 0.0;
        for (j, (&t, &q)) in yr.iter().zip(pr).enumerate() {
            if t == 0.0 {
                continue;
            }
            if q.is_nan() || q <= 0.0 {
                return Err(Error::NonPositiveProbability {
                    row: i,
                    col: j,
                    value: q,
                });
            }
            row += t * q.ln();
        }
        total += weights.map_or(1.0, |c| c[i]) * row;
    }
    Ok(total)
}

/// `-sum_i sum_j y_ij ln p_ij`.
pub fn ce_loss(y: ArrayView2<'_, f64>, p: ArrayView2<'_, f64>) -> Result<f64> {
    Ok(-weighted_log_score(y, p, None)?)
}

/// `sum_i n_i sum_j ytilde_ij ln p_ij`, the multinomial log-likelihood
/// without its parameter-free constant.
pub fn multinomial_loglik(
    ytilde: ArrayView2<'_, f64>,
    counts: &TrialCounts,
    p: ArrayView2<'_, f64>,
) -> Result<f64> {
    if counts.len() != ytilde.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} trial counts for {} rows",
            counts.len(),
            ytilde.nrows()
        )));
    }
    let c: Vec<f64> = counts.counts.iter().map(|&n| n as f64).collect();
    weighted_log_score(ytilde, p, Some(&c))
}

/// Gradient of [`ce_loss`] in `beta`; entry `(p, d)` is
/// `sum_i xeff_ip (p_id - y_id)` and column 0 is zero.
pub fn grad_ce_beta(
    y: ArrayView2<'_, f64>,
    xeff: ArrayView2<'_, f64>,
    p: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_same_shape(y, p)?;
    let mut g = xeff.t().dot(&(&p - &y));
    g.column_mut(0).fill(0.0);
    Ok(g)
}

/// Derivative of [`ce_loss`] in `rho`, given `U = d(xeff beta)/d rho`.
pub fn grad_ce_rho(
    y: ArrayView2<'_, f64>,
    p: ArrayView2<'_, f64>,
    u: ArrayView2<'_, f64>,
) -> Result<f64> {
    check_same_shape(y, p)?;
    check_same_shape(y, u)?;
    let pu = (&p * &u).sum_axis(Axis(1));
    let mut total = 0.0;
    for ((yr, ur), m) in y.rows().into_iter().zip(u.rows()).zip(pu) {
        total -= yr.iter().zip(ur).map(|(t, v)| t * (v - m)).sum::<f64>();
    }
    Ok(total)
}

/// Weighted objective and its gradient over the free parameters.
fn objective(
    y: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    weights: Option<&[f64]>,
    lag: Option<&LagAlgebra<'_>>,
    layout: ParamLayout,
    params: &ModelParams,
) -> Result<(f64, Vec<f64>)> {
    let (xeff, u) = match lag {
        Some(lag) => {
            let xt = lag.solve(x);
            let u = lag.solve(lag.apply_w(xt.dot(&params.beta).view()).view());
            (xt, Some(u))
        }
        None => (x.to_owned(), None),
    };
    let p = link_p(xeff.view(), params.beta.view())?;
    let value = weighted_log_score(y, p.view(), weights)?;
    let mut resid = &y - &p;
    if let Some(c) = weights {
        for (mut row, &ci) in resid.rows_mut().into_iter().zip(c) {
            row *= ci;
        }
    }
    let gb = xeff.t().dot(&resid);
    let mut grad = vec![0.0; layout.len()];
    for d in 1..layout.j {
        for k in 0..layout.k {
            grad[layout.beta_index(k, d)] = gb[[k, d]];
        }
    }
    if let (Some(r), Some(u)) = (layout.rho_index(), u) {
        grad[r] = (&resid * &u).sum();
    }
    Ok((value, grad))
}

/// Central differences of the analytic gradient, symmetrized.
fn fd_hessian<F>(mut grad: F, theta: &[f64], bounds: &crate::optim::Bounds) -> Result<Array2<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = theta.len();
    let mut h = Array2::zeros((n, n));
    for c in 0..n {
        let step = 1e-5 * theta[c].abs().max(1.0);
        let hi = (theta[c] + step).min(bounds.upper[c]);
        let lo = (theta[c] - step).max(bounds.lower[c]);
        let mut t = theta.to_vec();
        t[c] = hi;
        let gp = grad(&t)?;
        t[c] = lo;
        let gm = grad(&t)?;
        for r in 0..n {
            h[[r, c]] = (gp[r] - gm[r]) / (hi - lo);
        }
    }
    let sym = (&h + &h.t()) / 2.0;
    Ok(sym)
}

/// Cross-entropy fit, or count-weighted multinomial maximum likelihood when
/// `counts` is given; spatial when `w` is given. The design's `z` is unused.
/// The covariance comes from a finite-difference Hessian of the objective.
pub fn fit_multinomial(
    y: &CompositionMatrix,
    x: ArrayView2<'_, f64>,
    w: Option<&SpatialWeights>,
    counts: Option<&TrialCounts>,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n = y.n();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "labels have {n} rows but X has {}",
            x.nrows()
        )));
    }
    if let Some(c) = counts {
        if c.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} trial counts for {n} rows",
                c.len()
            )));
        }
    }
    if let Some(w) = w {
        if w.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "weights are {m}x{m} but there are {n} observations",
                m = w.n()
            )));
        }
    }
    let layout = ParamLayout {
        k: x.ncols(),
        j: y.classes(),
        kz: 0,
        spatial: w.is_some(),
    };
    let weights: Option<Vec<f64>> = counts.map(|c| c.counts.iter().map(|&v| v as f64).collect());
    let mut notes = FitNotes {
        model: match (counts.is_some(), w.is_some()) {
            (false, false) => "cross_entropy",
            (false, true) => "cross_entropy_spatial",
            (true, false) => "multinomial",
            (true, true) => "multinomial_spatial",
        }
        .to_owned(),
        zero_replaced: false,
        weights: w.map(|w| w.construction()),
        weights_row_normalized: w.map(|w| w.row_normalized()),
        rho_start: None,
        rho_identified: w.map(|w| !w.is_zero()),
        covariance: CovarianceSource::Omitted,
        messages: Vec::new(),
    };
    let mut init = match &config.init {
        Some(p) if p.beta.dim() == (layout.k, layout.j) => ModelParams {
            beta: p.beta.clone(),
            gamma: Array1::zeros(0),
            rho: layout.spatial.then(|| p.rho.unwrap_or(0.0)),
        },
        Some(p) => {
            return Err(Error::DimensionMismatch(format!(
                "initial beta is {:?}, model needs ({}, {})",
                p.beta.dim(),
                layout.k,
                layout.j
            )))
        }
        None => ModelParams::zeros(layout),
    };
    let bounds = rho_bounds(layout, config);
    let yv = y.values();
    let wts = weights.as_deref();

    if let Some(w) = w {
        if w.is_zero() {
            notes
                .messages
                .push("weights are identically zero: rho is not identified".to_owned());
        } else if config.rho_grid > 0 {
            init = profile_start(yv, x, wts, w, &init, config, &mut notes);
        }
    }
    notes.rho_start = init.rho;

    let mut cache: Option<LagAlgebra<'_>> = None;
    let mut eval = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = layout.unpack(theta);
        match w {
            Some(w) => {
                let rho = p.rho.unwrap_or(0.0);
                if cache.as_ref().is_none_or(|lag| lag.rho() != rho) {
                    cache = Some(LagAlgebra::new(w, rho)?);
                }
                objective(yv, x, wts, cache.as_ref(), layout, &p)
            }
            None => objective(yv, x, wts, None, layout, &p),
        }
    };
    let raw = run_maximize(&mut eval, &layout.pack(&init), &bounds, config)?;
    let hessian = fd_hessian(|t| eval(t).map(|r| r.1), &raw.theta, &bounds);
    Ok(finish(
        layout,
        raw,
        hessian,
        CovarianceSource::FiniteDifferenceHessian,
        &bounds,
        notes,
    ))
}

/// Best grid `rho` after fitting `beta` with `rho` held fixed.
fn profile_start(
    y: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    weights: Option<&[f64]>,
    w: &SpatialWeights,
    init: &ModelParams,
    config: &FitConfig,
    notes: &mut FitNotes,
) -> ModelParams {
    let inner = FitConfig {
        objective_rel_tolerance: 1e-8,
        max_iterations: 200,
        ..config.clone()
    };
    let layout = ParamLayout {
        k: x.ncols(),
        j: y.ncols(),
        kz: 0,
        spatial: false,
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut warm = layout.pack(&ModelParams {
        rho: None,
        ..init.clone()
    });
    let mut skipped = 0;
    for rho in crate::optim::fit::rho_grid(config) {
        let Ok(lag) = LagAlgebra::new(w, rho) else {
            skipped += 1;
            continue;
        };
        let xt = lag.solve(x);
        let fit = run_maximize(
            |theta| objective(y, xt.view(), weights, None, layout, &layout.unpack(theta)),
            &warm,
            &crate::optim::Bounds::unbounded(layout.len()),
            &inner,
        );
        match fit {
            Ok(raw) if raw.value.is_finite() => {
                warm.clone_from(&raw.theta);
                if best.as_ref().is_none_or(|(v, _)| raw.value > *v) {
                    let p = layout.unpack(&raw.theta);
                    best = Some((raw.value, ModelParams { rho: Some(rho), ..p }));
                }
            }
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        notes
            .messages
            .push(format!("rho scan skipped {skipped} grid points"));
    }
    best.map(|b| b.1).unwrap_or_else(|| init.clone())
}
