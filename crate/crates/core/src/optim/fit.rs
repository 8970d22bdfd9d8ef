use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::lbfgsb::{maximize, Bounds, Termination};
use super::{covariance_from_hessian, FitConfig};
use crate::compdata::{zero_replace, CompositionMatrix, DesignPair};
use crate::dirichlet::{self, link, link_mu, link_phi, ModelParams, ParamLayout};
use crate::error::{Error, Result};
use crate::metrics::aic;
use crate::sar::{hessian_spatial, spatial_gradient, spatial_link_with, spatial_loglik};
use crate::spatial::{Construction, LagAlgebra, SpatialWeights};

/// When to apply [`zero_replace`] to the labels before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroReplacement {
    /// Only when some entry is below [`crate::compdata::ZERO_THRESHOLD`].
    #[default]
    Auto,
    On,
    Off,
}

impl ZeroReplacement {
    pub fn apply(self, y: &CompositionMatrix) -> (CompositionMatrix, bool) {
        let replace = match self {
            Self::Auto => y.has_zeros(),
            Self::On => true,
            Self::Off => false,
        };
        if replace {
            (zero_replace(y), true)
        } else {
            (y.clone(), false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    AnalyticHessian,
    FiniteDifferenceHessian,
    Omitted,
}

/// Provenance recorded with every fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitNotes {
    pub model: String,
    pub zero_replaced: bool,
    pub weights: Option<Construction>,
    pub weights_row_normalized: Option<bool>,
    pub rho_start: Option<f64>,
    pub rho_identified: Option<bool>,
    pub covariance: CovarianceSource,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub loglik_hat: f64,
    pub aic: f64,
    /// Free parameters, in the order of `parameter_names`.
    pub parameter_names: Vec<String>,
    pub covariance: Option<Array2<f64>>,
    pub std_errors: Option<Array1<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub gradient_norm: f64,
    pub objective_trace: Vec<f64>,
    pub notes: FitNotes,
}

impl FitResult {
    pub fn n_free(&self) -> usize {
        self.parameter_names.len()
    }
}

/// Parameters of a finished optimization, shared by the Dirichlet and
/// multinomial drivers.
pub(crate) struct RawFit {
    pub theta: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<f64>,
}

pub(crate) fn run_maximize<F>(
    objective: F,
    init: &[f64],
    bounds: &Bounds,
    config: &FitConfig,
) -> Result<RawFit>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let m = maximize(objective, init, bounds, config)?;
    Ok(RawFit {
        theta: m.argmax,
        value: m.value,
        gradient: m.gradient,
        iterations: m.iterations,
        termination: m.termination,
        trace: m.trace,
    })
}

pub(crate) fn finish(
    layout: ParamLayout,
    raw: RawFit,
    hessian: Result<Array2<f64>>,
    source: CovarianceSource,
    bounds: &Bounds,
    mut notes: FitNotes,
) -> FitResult {
    let params = layout.unpack(&raw.theta);
    let (covariance, std_errors) = match hessian.and_then(|h| covariance_from_hessian(h.view())) {
        Ok((c, s)) => {
            notes.covariance = source;
            (Some(c), Some(s))
        }
        Err(e) => {
            notes.covariance = CovarianceSource::Omitted;
            notes.messages.push(format!("covariance omitted: {e}"));
            (None, None)
        }
    };
    let gradient_norm = raw
        .theta
        .iter()
        .zip(&raw.gradient)
        .enumerate()
        .map(|(i, (&x, &g))| {
            let blocked = (x <= bounds.lower[i] && g < 0.0) || (x >= bounds.upper[i] && g > 0.0);
            if blocked {
                0.0
            } else {
                g.abs()
            }
        })
        .fold(0.0, f64::max);
    FitResult {
        params,
        loglik_hat: raw.value,
        aic: aic(raw.value, layout.len()),
        parameter_names: layout.names(),
        covariance,
        std_errors,
        iterations: raw.iterations,
        converged: raw.termination.converged(),
        termination: raw.termination,
        gradient_norm,
        objective_trace: raw.trace,
        notes,
    }
}

fn initial_params(layout: ParamLayout, config: &FitConfig) -> Result<ModelParams> {
    match &config.init {
        None => Ok(ModelParams::zeros(layout)),
        Some(p) => {
            let got = p.layout();
            let compatible = got.k == layout.k && got.j == layout.j && got.kz == layout.kz;
            if !compatible {
                return Err(Error::DimensionMismatch(format!(
                    "initial parameters have shape {got:?}, model needs {layout:?}"
                )));
            }
            let mut p = ModelParams::new(p.beta.clone(), p.gamma.clone(), p.rho)?;
            p.rho = layout.spatial.then(|| p.rho.unwrap_or(0.0));
            Ok(p)
        }
    }
}

pub(crate) fn rho_bounds(layout: ParamLayout, config: &FitConfig) -> Bounds {
    let bounds = Bounds::unbounded(layout.len());
    match layout.rho_index() {
        Some(r) => bounds.with(r, config.rho_bounds.0, config.rho_bounds.1),
        None => bounds,
    }
}

/// Evenly spaced interior points of the `rho` box.
pub(crate) fn rho_grid(config: &FitConfig) -> Vec<f64> {
    let (lo, hi) = config.rho_bounds;
    let m = config.rho_grid;
    (1..=m)
        .map(|i| lo + (hi - lo) * i as f64 / (m + 1) as f64)
        .collect()
}

/// Non-spatial fit of `(beta, gamma)` on a fixed design.
fn fit_fixed_design(
    y: &CompositionMatrix,
    xeff: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    init: &ModelParams,
    config: &FitConfig,
) -> Result<(ModelParams, f64)> {
    let layout = ParamLayout {
        k: xeff.ncols(),
        j: y.classes(),
        kz: z.ncols(),
        spatial: false,
    };
    let start = ModelParams {
        rho: None,
        ..init.clone()
    };
    let raw = run_maximize(
        |theta| {
            let p = layout.unpack(theta);
            let st = link(xeff, z, &p)?;
            let value = dirichlet::loglik(y, &st)?;
            let grad = dirichlet::gradient(y, xeff, z, &st)?;
            Ok((value, grad.to_vec()))
        },
        &layout.pack(&start),
        &Bounds::unbounded(layout.len()),
        config,
    )?;
    Ok((layout.unpack(&raw.theta), raw.value))
}

/// Profile scan: for each grid `rho`, fit `(beta, gamma)` with `rho` held
/// fixed and keep the best.
fn profile_start(
    y: &CompositionMatrix,
    design: &DesignPair,
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
    let mut best: Option<(f64, ModelParams)> = None;
    let mut warm = init.clone();
    let mut skipped = 0;
    for rho in rho_grid(config) {
        let Ok(lag) = LagAlgebra::new(w, rho) else {
            skipped += 1;
            continue;
        };
        let x_tilde = lag.solve(design.x.view());
        match fit_fixed_design(y, x_tilde.view(), design.z.view(), &warm, &inner) {
            Ok((p, value)) if value.is_finite() => {
                warm = p.clone();
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, ModelParams { rho: Some(rho), ..p }));
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

/// Maximum-likelihood Dirichlet regression; spatial when `w` is given.
pub fn fit_dirichlet(
    y: &CompositionMatrix,
    design: &DesignPair,
    w: Option<&SpatialWeights>,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    let n = y.n();
    if design.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "labels have {n} rows but the designs have {}",
            design.n()
        )));
    }
    if let Some(w) = w {
        if w.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "weights are {m}x{m} but there are {n} observations",
                m = w.n()
            )));
        }
    }
    let (y, zero_replaced) = config.zero_replacement.apply(y);
    let layout = ParamLayout {
        k: design.x.ncols(),
        j: y.classes(),
        kz: design.z.ncols(),
        spatial: w.is_some(),
    };
    let mut notes = FitNotes {
        model: if w.is_some() { "dirichlet_spatial" } else { "dirichlet" }.to_owned(),
        zero_replaced,
        weights: w.map(|w| w.construction()),
        weights_row_normalized: w.map(|w| w.row_normalized()),
        rho_start: None,
        rho_identified: w.map(|w| !w.is_zero()),
        covariance: CovarianceSource::Omitted,
        messages: Vec::new(),
    };
    let mut init = initial_params(layout, config)?;
    let bounds = rho_bounds(layout, config);
    let x = design.x.view();
    let z = design.z.view();

    let Some(w) = w else {
        let raw = run_maximize(
            |theta| {
                let p = layout.unpack(theta);
                let st = link(x, z, &p)?;
                Ok((
                    dirichlet::loglik(&y, &st)?,
                    dirichlet::gradient(&y, x, z, &st)?.to_vec(),
                ))
            },
            &layout.pack(&init),
            &bounds,
            config,
        )?;
        let p = layout.unpack(&raw.theta);
        let hessian = link(x, z, &p).and_then(|st| dirichlet::hessian(&y, x, z, &st));
        return Ok(finish(
            layout,
            raw,
            hessian,
            CovarianceSource::AnalyticHessian,
            &bounds,
            notes,
        ));
    };

    if w.is_zero() {
        notes
            .messages
            .push("weights are identically zero: rho is not identified".to_owned());
    } else if config.rho_grid > 0 {
        init = profile_start(&y, design, w, &init, config, &mut notes);
    }
    notes.rho_start = init.rho;
    let mut cache: Option<LagAlgebra<'_>> = None;
    let raw = run_maximize(
        |theta| {
            let p = layout.unpack(theta);
            let rho = p.rho.unwrap_or(0.0);
            if cache.as_ref().is_none_or(|lag| lag.rho() != rho) {
                cache = Some(LagAlgebra::new(w, rho)?);
            }
            let lag = cache.as_ref().expect("factorization cached above");
            let st = spatial_link_with(lag, x, z, &p)?;
            Ok((
                spatial_loglik(&y, &st)?,
                spatial_gradient(&y, z, &st)?.to_vec(),
            ))
        },
        &layout.pack(&init),
        &bounds,
        config,
    )?;
    let p = layout.unpack(&raw.theta);
    let hessian = LagAlgebra::new(w, p.rho.unwrap_or(0.0))
        .and_then(|lag| spatial_link_with(&lag, x, z, &p))
        .and_then(|st| hessian_spatial(&y, z, &st));
    Ok(finish(
        layout,
        raw,
        hessian,
        CovarianceSource::AnalyticHessian,
        &bounds,
        notes,
    ))
}

/// Fitted means (and precisions when `z` is given). Spatial parameters need
/// the weights of the rows being predicted: prediction is in-sample with
/// respect to `w`.
pub fn predict(
    params: &ModelParams,
    x: ArrayView2<'_, f64>,
    z: Option<ArrayView2<'_, f64>>,
    w: Option<&SpatialWeights>,
) -> Result<(Array2<f64>, Option<Array1<f64>>)> {
    if x.ncols() != params.beta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} columns but beta has {} rows",
            x.ncols(),
            params.beta.nrows()
        )));
    }
    let mu = match (params.rho, w) {
        (Some(rho), Some(w)) => {
            let lag = LagAlgebra::new(w, rho)?;
            crate::spatial::lag::check_rows(w, x)?;
            link_mu(lag.solve(x).view(), params.beta.view())?
        }
        (Some(_), None) => {
            return Err(Error::InvalidConfig(
                "spatial prediction needs the weights of the predicted rows".into(),
            ))
        }
        (None, _) => link_mu(x, params.beta.view())?,
    };
    let phi = match z {
        Some(z) => {
            if z.nrows() != x.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "X has {} rows but Z has {}",
                    x.nrows(),
                    z.nrows()
                )));
            }
            Some(link_phi(z, params.gamma.view())?)
        }
        None => None,
    };
    Ok((mu, phi))
}
