//! Synthetic spatial compositional data and the Monte-Carlo studies built
//! on it.
//!
//! Every random quantity comes from a ChaCha8 stream addressed by
//! `(seed, replication, stream)`, so replications can run in any order or in
//! parallel and still reproduce bit for bit.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compdata::{CompositionMatrix, DesignPair};
use crate::dirichlet::{link_mu, link_phi, ModelParams, ParamLayout};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::multinomial::{fit_multinomial, TrialCounts};
use crate::optim::{fit_dirichlet, FitConfig, FitResult};
use crate::spatial::{build_band_weights, row_normalize, LagAlgebra, SpatialWeights};

/// One `Gamma(alpha, 1)` draw on the log scale. Shapes below 1 use
/// `G(alpha) = G(alpha + 1) U^(1/alpha)`, which stays finite where the draw
/// itself would underflow.
fn ln_gamma_draw<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha >= 1.0 {
        let g: f64 = Gamma::new(alpha, 1.0).expect("positive shape").sample(rng);
        return g.ln();
    }
    let g: f64 = Gamma::new(alpha + 1.0, 1.0)
        .expect("positive shape")
        .sample(rng);
    let u: f64 = rng.random();
    g.ln() + u.ln() / alpha
}

/// A Dirichlet draw as normalized independent Gamma draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: ArrayView1<'_, f64>, rng: &mut R) -> Array1<f64> {
    debug_assert!(alpha.iter().all(|&a| a > 0.0));
    let logs: Array1<f64> = alpha.mapv(|a| ln_gamma_draw(a, rng));
    let top = logs.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = logs.mapv(|v| (v - top).exp());
    let total = out.sum();
    out /= total;
    out
}

/// Class counts of `trials` categorical draws, divided by `trials`.
pub fn sample_multinomial_proportions<R: Rng + ?Sized>(
    trials: u64,
    p: ArrayView1<'_, f64>,
    rng: &mut R,
) -> Array1<f64> {
    debug_assert!(trials >= 1);
    let j = p.len();
    let mut counts = Array1::<f64>::zeros(j);
    let mut left = trials;
    let mut mass = 1.0;
    for c in 0..j {
        if left == 0 {
            break;
        }
        if c == j - 1 || mass <= 0.0 {
            counts[c] = left as f64;
            break;
        }
        let q = (p[c] / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        counts[c] = draw as f64;
        left -= draw;
        mass -= p[c];
    }
    counts / trials as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Dirichlet,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub rho_true: f64,
    pub k_neighbors: usize,
    /// Row-normalize the band weights before generating and fitting.
    pub row_normalize: bool,
    /// `K x J` with `K` = 1 + number of covariates; row 0 is the intercept.
    pub beta_true: Array2<f64>,
    /// Intercept and uniform covariate.
    pub gamma_true: Array1<f64>,
    pub generator: Generator,
    pub trial_range: (u64, u64),
    pub replications: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::dirichlet(1000, 0.5)
    }
}

impl SyntheticConfig {
    /// Three balanced classes, two normal covariates, well-separated
    /// precision.
    pub fn dirichlet(n: usize, rho_true: f64) -> Self {
        Self {
            n,
            rho_true,
            k_neighbors: 5,
            row_normalize: true,
            beta_true: ndarray::array![[0.0, 0.0, 0.1], [0.0, 1.0, -2.0], [0.0, -1.0, -2.0]],
            gamma_true: ndarray::array![2.0, 3.0],
            generator: Generator::Dirichlet,
            trial_range: (100, 10_000),
            replications: 100,
            seed: 0,
        }
    }

    /// Multinomial labels with trial counts uniform on `trial_range`.
    pub fn multinomial(n: usize, rho_true: f64) -> Self {
        Self {
            beta_true: ndarray::array![[0.0, -0.2, 0.1], [0.0, 2.0, -1.5], [0.0, 0.5, -2.0]],
            generator: Generator::Multinomial,
            ..Self::dirichlet(n, rho_true)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig("n must be at least 2".into()));
        }
        if self.k_neighbors == 0 || self.k_neighbors >= self.n {
            return Err(Error::InvalidK {
                k: self.k_neighbors,
                n: self.n,
            });
        }
        if self.beta_true.nrows() < 1 {
            return Err(Error::InvalidConfig("beta_true needs an intercept row".into()));
        }
        if self.gamma_true.is_empty() || self.gamma_true.len() > 2 {
            return Err(Error::InvalidConfig(
                "gamma_true must have 1 (intercept) or 2 (intercept, covariate) entries".into(),
            ));
        }
        ModelParams::new(
            self.beta_true.clone(),
            self.gamma_true.clone(),
            Some(self.rho_true),
        )?;
        let (lo, hi) = self.trial_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "trial range ({lo}, {hi}) must satisfy 1 <= lo <= hi"
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        Ok(())
    }

    pub fn truth(&self) -> ModelParams {
        ModelParams {
            beta: self.beta_true.clone(),
            gamma: self.gamma_true.clone(),
            rho: Some(self.rho_true),
        }
    }

    pub fn weights(&self) -> Result<SpatialWeights> {
        let w = build_band_weights(self.n, self.k_neighbors)?;
        Ok(if self.row_normalize { row_normalize(w) } else { w })
    }
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Covariates = 0,
    Labels = 1,
    Trials = 2,
}

/// Replication indices at and above this offset address test sets.
const TEST_SET_OFFSET: u64 = 1 << 40;

fn stream_rng(seed: u64, replication: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 2) | stream as u64);
    rng
}

/// A generated dataset together with the values it was generated from.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub design: DesignPair,
    pub weights: SpatialWeights,
    pub y: CompositionMatrix,
    pub mu: Array2<f64>,
    pub phi: Array1<f64>,
    pub truth: ModelParams,
    pub trials: Option<TrialCounts>,
}

/// Trial counts drawn once per seed, shared by every replication.
pub fn trial_counts(config: &SyntheticConfig) -> Result<TrialCounts> {
    let mut rng = stream_rng(config.seed, 0, Stream::Trials);
    let (lo, hi) = config.trial_range;
    TrialCounts::new((0..config.n).map(|_| rng.random_range(lo..=hi)).collect())
}

fn generate_with(
    config: &SyntheticConfig,
    replication: u64,
    weights: &SpatialWeights,
    trials: Option<&TrialCounts>,
) -> Result<SyntheticDataset> {
    let n = config.n;
    let k = config.beta_true.nrows();
    let mut rng = stream_rng(config.seed, replication, Stream::Covariates);
    let x = Array2::from_shape_fn((n, k), |(_, p)| {
        if p == 0 {
            1.0
        } else {
            rng.sample(StandardNormal)
        }
    });
    let kz = config.gamma_true.len();
    let z = Array2::from_shape_fn((n, kz), |(_, p)| if p == 0 { 1.0 } else { rng.random() });
    let truth = config.truth();
    let lag = LagAlgebra::new(weights, config.rho_true)?;
    let mu = link_mu(lag.solve(x.view()).view(), truth.beta.view())?;
    let phi = link_phi(z.view(), truth.gamma.view())?;

    let mut rng = stream_rng(config.seed, replication, Stream::Labels);
    let mut y = Array2::zeros(mu.dim());
    for i in 0..n {
        let row = match (config.generator, trials) {
            (Generator::Multinomial, Some(t)) => {
                sample_multinomial_proportions(t.counts()[i], mu.row(i), &mut rng)
            }
            _ => {
                let alpha = mu.row(i).mapv(|m| (phi[i] * m).max(f64::MIN_POSITIVE));
                sample_dirichlet(alpha.view(), &mut rng)
            }
        };
        y.row_mut(i).assign(&row);
    }
    Ok(SyntheticDataset {
        design: DesignPair::new(x, z)?,
        weights: weights.clone(),
        y: CompositionMatrix::new(y)?,
        mu,
        phi,
        truth,
        trials: trials.cloned(),
    })
}

/// The dataset of one replication.
pub fn generate_dataset(config: &SyntheticConfig, replication: usize) -> Result<SyntheticDataset> {
    config.validate()?;
    let w = config.weights()?;
    let trials = match config.generator {
        Generator::Multinomial => Some(trial_counts(config)?),
        Generator::Dirichlet => None,
    };
    generate_with(config, replication as u64, &w, trials.as_ref())
}

/// A fresh dataset from the same truth, independent of every replication.
pub fn generate_test_set(config: &SyntheticConfig, index: usize) -> Result<SyntheticDataset> {
    config.validate()?;
    let w = config.weights()?;
    let trials = match config.generator {
        Generator::Multinomial => Some(trial_counts(config)?),
        Generator::Dirichlet => None,
    };
    generate_with(config, TEST_SET_OFFSET + index as u64, &w, trials.as_ref())
}

/// The estimators compared in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dirichlet,
    DirichletSpatial,
    Multinomial,
    MultinomialSpatial,
}

impl ModelKind {
    pub fn is_spatial(self) -> bool {
        matches!(self, Self::DirichletSpatial | Self::MultinomialSpatial)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Dirichlet => "dirichlet",
            Self::DirichletSpatial => "dirichlet_spatial",
            Self::Multinomial => "multinomial",
            Self::MultinomialSpatial => "multinomial_spatial",
        }
    }

    pub fn fit(self, data: &SyntheticDataset, config: &FitConfig) -> Result<FitResult> {
        let w = self.is_spatial().then_some(&data.weights);
        match self {
            Self::Dirichlet | Self::DirichletSpatial => fit_dirichlet(&data.y, &data.design, w, config),
            Self::Multinomial | Self::MultinomialSpatial => fit_multinomial(
                &data.y,
                data.design.x.view(),
                w,
                data.trials.as_ref(),
                config,
            ),
        }
    }

    /// Parameters this model estimates, in free-parameter order, with their
    /// true values.
    fn truth_vector(self, truth: &ModelParams) -> Vec<f64> {
        let has_gamma = matches!(self, Self::Dirichlet | Self::DirichletSpatial);
        let layout = ParamLayout {
            k: truth.beta.nrows(),
            j: truth.beta.ncols(),
            kz: if has_gamma { truth.gamma.len() } else { 0 },
            spatial: self.is_spatial(),
        };
        let mut t = ModelParams {
            gamma: if has_gamma { truth.gamma.clone() } else { Array1::zeros(0) },
            ..truth.clone()
        };
        if !self.is_spatial() {
            t.rho = None;
        }
        layout.pack(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub synthetic: SyntheticConfig,
    pub models: Vec<ModelKind>,
    pub fit: FitConfig,
}

/// Mean error, sample standard deviation (divisor `reps - 1`, 0 for a single
/// replication) and mean squared error of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub model: ModelKind,
    pub n: usize,
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub mse: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTally {
    pub model: ModelKind,
    pub converged: usize,
    pub not_converged: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationTable {
    pub rows: Vec<ReplicationRow>,
    pub tallies: Vec<ModelTally>,
    pub assumptions: Vec<String>,
}

impl ReplicationTable {
    pub fn row(&self, model: ModelKind, parameter: &str) -> Option<&ReplicationRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.parameter == parameter)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,n,parameter,truth,bias,sd,mse,replications\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.model.label(),
                r.n,
                r.parameter,
                r.truth,
                r.bias,
                r.sd,
                r.mse,
                r.replications
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Assumptions behind generated data that the underlying model description
/// leaves open; recorded with every study output.
pub fn generator_assumptions(config: &SyntheticConfig) -> Vec<String> {
    let mut notes = vec![
        "X = [1, x1, ...] with covariates independent standard normal".to_owned(),
        "Z = [1, u] with u ~ Uniform(0, 1)".to_owned(),
        format!(
            "W: band with k = {}, {}",
            config.k_neighbors,
            if config.row_normalize { "row-normalized" } else { "entries 1/k, not normalized" }
        ),
        "sd uses divisor replications - 1".to_owned(),
    ];
    if config.generator == Generator::Multinomial {
        notes.push(format!(
            "trial counts uniform on {:?}, drawn once per seed",
            config.trial_range
        ));
    }
    notes
}

/// Summary statistics of the errors of one parameter.
pub fn error_summary(errors: &[f64]) -> (f64, f64, f64) {
    let m = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / m;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / m;
    let sd = if errors.len() > 1 {
        (errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    (bias, sd, mse)
}

/// The fits of one replication, one entry per model of the study.
pub type ReplicationFits = Vec<Result<FitResult>>;

/// Generate and fit every replication; `jobs` bounds the worker threads
/// (0 means the rayon default).
pub fn run_replications(study: &StudyConfig, jobs: usize) -> Result<Vec<ReplicationFits>> {
    let syn = &study.synthetic;
    syn.validate()?;
    study.fit.validate()?;
    let w = syn.weights()?;
    let trials = match syn.generator {
        Generator::Multinomial => Some(trial_counts(syn)?),
        Generator::Dirichlet => None,
    };
    let run = || {
        (0..syn.replications)
            .into_par_iter()
            .map(|r| -> Result<ReplicationFits> {
                let data = generate_with(syn, r as u64, &w, trials.as_ref())?;
                Ok(study
                    .models
                    .iter()
                    .map(|m| m.fit(&data, &study.fit))
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(run)
}

/// Bias, SD and MSE per parameter and model. Fits that failed or did not
/// converge are tallied and excluded.
pub fn summarize_replications(study: &StudyConfig, fits: &[ReplicationFits]) -> ReplicationTable {
    let truth = study.synthetic.truth();
    let mut rows = Vec::new();
    let mut tallies = Vec::new();
    for (m, &model) in study.models.iter().enumerate() {
        let truth_vec = model.truth_vector(&truth);
        let mut errors: Vec<Vec<f64>> = vec![Vec::new(); truth_vec.len()];
        let mut tally = ModelTally {
            model,
            converged: 0,
            not_converged: 0,
            errors: Vec::new(),
        };
        let mut names = Vec::new();
        for (r, rep) in fits.iter().enumerate() {
            match &rep[m] {
                Ok(fit) if fit.converged => {
                    tally.converged += 1;
                    names.clone_from(&fit.parameter_names);
                    let est = fit.params.layout().pack(&fit.params);
                    for (e, (a, b)) in errors.iter_mut().zip(est.iter().zip(&truth_vec)) {
                        e.push(a - b);
                    }
                }
                Ok(_) => tally.not_converged += 1,
                Err(e) => tally.errors.push(format!("replication {r}: {e}")),
            }
        }
        if tally.converged > 0 {
            for ((name, errs), &t) in names.into_iter().zip(&errors).zip(&truth_vec) {
                let (bias, sd, mse) = error_summary(errs);
                rows.push(ReplicationRow {
                    model,
                    n: study.synthetic.n,
                    parameter: name,
                    truth: t,
                    bias,
                    sd,
                    mse,
                    replications: errs.len(),
                });
            }
        }
        tallies.push(tally);
    }
    ReplicationTable {
        rows,
        tallies,
        assumptions: generator_assumptions(&study.synthetic),
    }
}

pub fn run_replication_study(study: &StudyConfig, jobs: usize) -> Result<ReplicationTable> {
    let fits = run_replications(study, jobs)?;
    Ok(summarize_replications(study, &fits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub model: ModelKind,
    pub metrics: MetricsReport,
}

/// Compare the true means of a fresh test set with the means implied by
/// each fitted parameter set, over the test set's own `X` and `W`.
pub fn run_prediction_study(
    config: &SyntheticConfig,
    fitted: &[(ModelKind, ModelParams)],
) -> Result<Vec<PredictionReport>> {
    let test = generate_test_set(config, 0)?;
    let mut out = Vec::with_capacity(fitted.len());
    for (model, params) in fitted {
        let mu_hat = match params.rho {
            Some(rho) => {
                let lag = LagAlgebra::new(&test.weights, rho)?;
                link_mu(lag.solve(test.design.x.view()).view(), params.beta.view())?
            }
            None => link_mu(test.design.x.view(), params.beta.view())?,
        };
        out.push(PredictionReport {
            model: *model,
            metrics: MetricsReport::compute(test.mu.view(), mu_hat.view(), None)?,
        });
    }
    Ok(out)
}
