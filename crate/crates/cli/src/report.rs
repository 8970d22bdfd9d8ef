//! JSON documents written by the commands, and their human summaries.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sardir::metrics::MetricsReport;
use sardir::optim::FitResult;
use sardir::simulate::{PredictionReport, ReplicationTable, SyntheticConfig};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::ingest::LabelScale;

/// Bumped whenever a document changes shape.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T> {
    pub schema: &'static str,
    pub schema_version: u32,
    pub seed: u64,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(schema: &'static str, seed: u64, body: T) -> Self {
        Self {
            schema,
            schema_version: SCHEMA_VERSION,
            seed,
            body,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightsSummary {
    pub spec: String,
    pub row_normalized: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub n: usize,
    pub labels: Vec<String>,
    /// Columns of X, in the row order of `beta`.
    pub features: Vec<String>,
    /// Columns of Z, in the order of `gamma`; empty for multinomial models.
    pub precision: Vec<String>,
    pub labels_scale: LabelScale,
    pub labels_closed: bool,
    pub weights: Option<WeightsSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDocument {
    pub data: DataSummary,
    pub fit: FitResult,
    pub in_sample_metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fold {
    pub held_out: usize,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub aic: f64,
    /// Metrics over the fold's training rows; absent when every class is
    /// constant there.
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation (divisor `len - 1`; 0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldSummary {
    pub r2: Option<MeanSd>,
    pub rmse: Option<MeanSd>,
    pub cross_entropy: Option<MeanSd>,
    pub aic: MeanSd,
    pub cosine_similarity: Option<MeanSd>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoocvProtocol {
    pub folds: usize,
    pub fold_metrics: &'static str,
    pub sd: &'static str,
    pub held_out: &'static str,
    pub spatial_weights: &'static str,
}

pub const LOOCV_PROTOCOL: LoocvProtocol = LoocvProtocol {
    folds: 0,
    fold_metrics: "each fold's metrics are computed on its n-1 training rows with the fold's fit",
    sd: "sample standard deviation across folds, divisor n_folds - 1",
    held_out: "held_out_metrics pool the n held-out predictions",
    spatial_weights: "each fold fits on the training rows' sub-matrix of W; the held-out row is predicted with the full W and the fold's parameters",
};

#[derive(Debug, Clone, Serialize)]
pub struct LoocvDocument {
    pub data: DataSummary,
    pub model: String,
    pub order: u8,
    pub protocol: LoocvProtocol,
    pub summary: FoldSummary,
    pub held_out_metrics: Option<MetricsReport>,
    pub not_converged: usize,
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateDocument {
    pub config: SyntheticConfig,
    pub assumptions: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateDocument {
    pub config: SyntheticConfig,
    pub table: ReplicationTable,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionFit {
    pub model: String,
    pub converged: bool,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictDocument {
    pub config: SyntheticConfig,
    pub assumptions: Vec<String>,
    pub fits: Vec<PredictionFit>,
    pub predictions: Vec<PredictionReport>,
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn emit<T: Serialize>(doc: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("serializable document");
    text.push('\n');
    match path {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Write {
                path: "<stdout>".into(),
                source,
            }),
    }
}

pub fn fit_summary(doc: &FitDocument) -> String {
    let fit = &doc.fit;
    let mut s = String::new();
    writeln!(s, "model: {}  n = {}", fit.notes.model, doc.data.n).unwrap();
    writeln!(s, "{:<16} {:>12} {:>12}", "parameter", "estimate", "std.err").unwrap();
    let theta = free_values(fit);
    for (i, name) in fit.parameter_names.iter().enumerate() {
        let se = match &fit.std_errors {
            Some(se) => format!("{:12.6}", se[i]),
            None => format!("{:>12}", "-"),
        };
        writeln!(s, "{name:<16} {:12.6} {se}", theta[i]).unwrap();
    }
    writeln!(s, "log-likelihood: {:.6}", fit.loglik_hat).unwrap();
    writeln!(s, "AIC: {:.6}", fit.aic).unwrap();
    if let Some(rho) = fit.params.rho {
        writeln!(s, "rho: {rho:.6}").unwrap();
    }
    if let Some(m) = &doc.in_sample_metrics {
        writeln!(
            s,
            "in-sample R2 {:.4}  RMSE {:.4}  cross-entropy {:.4}  cosine {:.4}",
            m.r2_mean, m.rmse, m.cross_entropy, m.cosine_similarity
        )
        .unwrap();
    }
    writeln!(
        s,
        "{} after {} iterations ({:?})",
        if fit.converged { "converged" } else { "NOT converged" },
        fit.iterations,
        fit.termination
    )
    .unwrap();
    for msg in &fit.notes.messages {
        writeln!(s, "note: {msg}").unwrap();
    }
    s
}

/// Free parameters in the order of `parameter_names`.
pub fn free_values(fit: &FitResult) -> Vec<f64> {
    let p = &fit.params;
    let mut out = Vec::with_capacity(fit.n_free());
    for d in 1..p.beta.ncols() {
        out.extend(p.beta.column(d).iter());
    }
    out.extend(p.gamma.iter());
    out.extend(p.rho);
    out
}

pub fn loocv_summary(doc: &LoocvDocument) -> String {
    let s = &doc.summary;
    let cell = |m: Option<MeanSd>| match m {
        Some(m) => format!("{:.4} ({:.4})", m.mean, m.sd),
        None => "-".into(),
    };
    let mut out = String::new();
    writeln!(
        out,
        "{} LOOCV, order {}, {} folds",
        doc.model,
        doc.order,
        doc.folds.len()
    )
    .unwrap();
    writeln!(out, "R2                {}", cell(s.r2)).unwrap();
    writeln!(out, "RMSE              {}", cell(s.rmse)).unwrap();
    writeln!(out, "cross-entropy     {}", cell(s.cross_entropy)).unwrap();
    writeln!(out, "AIC               {:.1} ({:.1})", s.aic.mean, s.aic.sd).unwrap();
    writeln!(out, "cosine similarity {}", cell(s.cosine_similarity)).unwrap();
    if let Some(m) = &doc.held_out_metrics {
        writeln!(
            out,
            "held-out pooled: R2 {:.4}  RMSE {:.4}  cross-entropy {:.4}  cosine {:.4}",
            m.r2_mean, m.rmse, m.cross_entropy, m.cosine_similarity
        )
        .unwrap();
    }
    if doc.not_converged > 0 {
        writeln!(out, "{} folds did not converge", doc.not_converged).unwrap();
    }
    out
}

pub fn replicate_summary(table: &ReplicationTable) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<20} {:<12} {:>9} {:>10} {:>10} {:>10}",
        "model", "parameter", "truth", "bias", "sd", "mse"
    )
    .unwrap();
    for r in &table.rows {
        writeln!(
            out,
            "{:<20} {:<12} {:>9.4} {:>10.4} {:>10.4} {:>10.4}",
            r.model.label(),
            r.parameter,
            r.truth,
            r.bias,
            r.sd,
            r.mse
        )
        .unwrap();
    }
    for t in &table.tallies {
        writeln!(
            out,
            "{}: {} converged, {} not converged, {} failed",
            t.model.label(),
            t.converged,
            t.not_converged,
            t.errors.len()
        )
        .unwrap();
    }
    out
}

pub fn predict_summary(reports: &[PredictionReport]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<20} {:>8} {:>8} {:>14} {:>8}",
        "model", "R2", "RMSE", "cross-entropy", "cosine"
    )
    .unwrap();
    for r in reports {
        let m = &r.metrics;
        writeln!(
            out,
            "{:<20} {:>8.4} {:>8.4} {:>14.4} {:>8.4}",
            r.model.label(),
            m.r2_mean,
            m.rmse,
            m.cross_entropy,
            m.cosine_similarity
        )
        .unwrap();
    }
    out
}
