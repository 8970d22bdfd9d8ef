use std::path::Path;

use log::{info, warn};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rayon::prelude::*;
use sardir::compdata::{intercept_only, CompositionMatrix, DesignPair};
use sardir::metrics::MetricsReport;
use sardir::multinomial::{fit_multinomial, TrialCounts};
use sardir::optim::{fit_dirichlet, predict, FitConfig, FitResult};
use sardir::simulate::{
    generate_dataset, generator_assumptions, run_prediction_study, run_replication_study,
    Generator, ModelKind, StudyConfig, SyntheticConfig,
};
use sardir::spatial::SpatialWeights;

use crate::args::{
    Cli, Command, DataArgs, FitArgs, GeneratorChoice, ModelChoice, ModelName, OptimArgs,
    ReplicateArgs, StudyArgs, ZMode, ZeroReplace,
};
use crate::config::Config;
use crate::error::{CliError, Result};
use crate::ingest::{load_dataset, load_weights, DataFiles, Dataset, LabelOptions};
use crate::report::{
    emit, fit_summary, loocv_summary, predict_summary, replicate_summary, DataSummary, Envelope,
    FitDocument, Fold, FoldSummary, LoocvDocument, LoocvProtocol, MeanSd, PredictDocument,
    PredictionFit, ReplicateDocument, SimulateDocument, WeightsSummary, LOOCV_PROTOCOL,
};

/// How a command that produced its output ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::NotConverged => 4,
        }
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    let config = Config::load(cli.config.as_deref())?;
    let seed = config.seed(cli.seed)?;
    let jobs = config.resolve(cli.jobs, "jobs", 1)?.max(1);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Fit(args) => fit(&args, &config, seed, out),
        Command::Loocv(args) => loocv(&args, &config, seed, jobs, out),
        Command::Simulate(args) => simulate(&args, &config, seed, out),
        Command::Replicate(args) => replicate(&args, &config, seed, jobs, out),
        Command::PredictStudy(args) => predict_study(&args, &config, seed, out),
    }
}

fn fit_config(optim: &OptimArgs, zero: Option<ZeroReplace>, config: &Config, seed: u64) -> Result<FitConfig> {
    let d = FitConfig::default();
    let zero: ZeroReplace = match zero {
        Some(z) => z,
        None => config.get("zero_replace")?.unwrap_or(ZeroReplace::Auto),
    };
    let fit = FitConfig {
        max_iterations: config.resolve(optim.max_iterations, "max_iterations", d.max_iterations)?,
        gradient_tolerance: config.resolve(
            optim.gradient_tolerance,
            "gradient_tolerance",
            d.gradient_tolerance,
        )?,
        objective_rel_tolerance: config.resolve(
            optim.objective_tolerance,
            "objective_tolerance",
            d.objective_rel_tolerance,
        )?,
        memory: config.resolve(optim.memory, "memory", d.memory)?,
        rho_bounds: (
            config.resolve(None, "rho_lower", d.rho_bounds.0)?,
            config.resolve(None, "rho_upper", d.rho_bounds.1)?,
        ),
        rho_grid: config.resolve(optim.rho_grid, "rho_grid", d.rho_grid)?,
        zero_replacement: zero.into(),
        seed: Some(seed),
        init: None,
    };
    fit.validate().map_err(|e| CliError::input("fit options", e))?;
    Ok(fit)
}

/// A dataset ready for fitting, with its column names.
struct Prepared {
    data: Dataset,
    design: DesignPair,
    weights: Option<SpatialWeights>,
    summary: DataSummary,
}

impl Prepared {
    fn counts(&self) -> Result<Option<TrialCounts>> {
        self.data
            .trials
            .as_ref()
            .map(|c| TrialCounts::new(c.clone()).map_err(|e| CliError::input("trials", e)))
            .transpose()
    }
}

fn prepare(args: &DataArgs) -> Result<Prepared> {
    if args.spatial && args.weights.is_none() {
        return Err(CliError::Usage("--spatial needs --weights".into()));
    }
    if !args.spatial && args.weights.is_some() {
        return Err(CliError::Usage("--weights is only used with --spatial".into()));
    }
    if args.z_file.is_some() != (args.z == ZMode::File) {
        return Err(CliError::Usage("--z file and --z-file go together".into()));
    }
    if args.model == ModelChoice::Multinomial && args.z != ZMode::Intercept {
        return Err(CliError::Usage("--z applies to the dirichlet model only".into()));
    }
    let files = DataFiles {
        features: args.features.clone(),
        labels: args.labels.clone(),
        precision: args.z_file.clone(),
        manifest: args.manifest.clone(),
    };
    let labels = LabelOptions {
        scale: args.labels_scale,
        close: args.close_labels,
    };
    let data = load_dataset(&files, labels)?;
    let n = data.n();

    let mut x = data.x.clone();
    let mut feature_names = data.feature_names.clone();
    if args.order == 2 {
        x = concatenate![Axis(1), x, x.mapv(|v| v * v)];
        let squares: Vec<String> = feature_names.iter().map(|f| format!("{f}^2")).collect();
        feature_names.extend(squares);
    }
    let intercept = !args.no_intercept;
    let add_intercept = |m: Array2<f64>, names: &mut Vec<String>| {
        if intercept {
            names.insert(0, "(intercept)".into());
            concatenate![Axis(1), intercept_only(m.nrows()), m]
        } else {
            m
        }
    };
    let x = add_intercept(x, &mut feature_names);
    if x.ncols() == 0 {
        return Err(CliError::Usage("the mean design has no columns".into()));
    }
    let (z, precision_names) = match args.z {
        ZMode::Intercept => (intercept_only(n), vec!["(intercept)".to_string()]),
        ZMode::CopyX => (x.clone(), feature_names.clone()),
        ZMode::File => {
            let mut names = data.precision_names.clone();
            let z = data.z.clone().expect("precision file loaded");
            (add_intercept(z, &mut names), names)
        }
    };
    let design = DesignPair::new(x, z).map_err(|e| CliError::input("design", e))?;

    let (weights, weights_summary) = match (&args.weights, args.spatial) {
        (Some(spec), true) => {
            let (w, warnings) = load_weights(spec, n, args.coords.as_deref(), args.row_normalize)?;
            let summary = WeightsSummary {
                spec: spec.describe(),
                row_normalized: w.row_normalized(),
                warnings,
            };
            (Some(w), Some(summary))
        }
        _ => (None, None),
    };
    let precision_names = match args.model {
        ModelChoice::Dirichlet => precision_names,
        ModelChoice::Multinomial => Vec::new(),
    };
    let summary = DataSummary {
        n,
        labels: data.label_names.clone(),
        features: feature_names,
        precision: precision_names,
        labels_scale: args.labels_scale,
        labels_closed: args.close_labels,
        weights: weights_summary,
    };
    Ok(Prepared {
        data,
        design,
        weights,
        summary,
    })
}

fn fit_model(
    model: ModelChoice,
    y: &CompositionMatrix,
    design: &DesignPair,
    w: Option<&SpatialWeights>,
    counts: Option<&TrialCounts>,
    config: &FitConfig,
) -> Result<FitResult> {
    let fit = match model {
        ModelChoice::Dirichlet => fit_dirichlet(y, design, w, config),
        ModelChoice::Multinomial => fit_multinomial(y, design.x.view(), w, counts, config),
    }?;
    Ok(fit)
}

/// Fitted means for the rows of `design`.
fn fitted_means(
    model: ModelChoice,
    fit: &FitResult,
    design: &DesignPair,
    w: Option<&SpatialWeights>,
) -> Result<Array2<f64>> {
    let z = match model {
        ModelChoice::Dirichlet => Some(design.z.view()),
        ModelChoice::Multinomial => None,
    };
    Ok(predict(&fit.params, design.x.view(), z, w)?.0)
}

fn fit(args: &FitArgs, config: &Config, seed: u64, out: Option<&Path>) -> Result<Status> {
    let prepared = prepare(&args.data)?;
    let fit_config = fit_config(&args.optim, args.data.zero_replace, config, seed)?;
    let counts = prepared.counts()?;
    let w = prepared.weights.as_ref();
    let result = fit_model(
        args.data.model,
        &prepared.data.y,
        &prepared.design,
        w,
        counts.as_ref(),
        &fit_config,
    )?;
    let mu = fitted_means(args.data.model, &result, &prepared.design, w)?;
    let in_sample_metrics =
        match MetricsReport::compute(prepared.data.y.values(), mu.view(), Some(result.aic)) {
            Ok(m) => Some(m),
            Err(e) => {
                warn!("in-sample metrics unavailable: {e}");
                None
            }
        };
    let converged = result.converged;
    let doc = FitDocument {
        data: prepared.summary,
        fit: result,
        in_sample_metrics,
    };
    let summary = fit_summary(&doc);
    emit(&Envelope::new("sardir.fit", seed, doc), out)?;
    print_summary(&summary, out);
    Ok(if converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}

/// The human summary goes to stdout unless stdout carries the JSON.
fn print_summary(summary: &str, out: Option<&Path>) {
    if out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

fn loocv(args: &FitArgs, config: &Config, seed: u64, jobs: usize, out: Option<&Path>) -> Result<Status> {
    let prepared = prepare(&args.data)?;
    let fit_config = fit_config(&args.optim, args.data.zero_replace, config, seed)?;
    let counts = prepared.counts()?;
    let n = prepared.data.n();
    if n < 2 {
        return Err(CliError::Usage("LOOCV needs at least 2 rows".into()));
    }
    let model = args.data.model;
    let run_fold = |i: usize| -> Result<(Fold, Vec<f64>)> {
        let train: Vec<usize> = (0..n).filter(|&r| r != i).collect();
        let y = prepared.data.y.select_rows(&train);
        let design = prepared.design.select_rows(&train);
        let w = prepared.weights.as_ref().map(|w| w.select(&train));
        let c = counts.as_ref().map(|c| c.select(&train));
        let fit = fit_model(model, &y, &design, w.as_ref(), c.as_ref(), &fit_config)?;
        let mu_train = fitted_means(model, &fit, &design, w.as_ref())?;
        let metrics = MetricsReport::compute(y.values(), mu_train.view(), Some(fit.aic)).ok();
        let mu_all = fitted_means(model, &fit, &prepared.design, prepared.weights.as_ref())?;
        let predicted = mu_all.row(i).to_vec();
        let fold = Fold {
            held_out: i,
            observed: prepared.data.y.values().row(i).to_vec(),
            predicted: predicted.clone(),
            converged: fit.converged,
            iterations: fit.iterations,
            loglik: fit.loglik_hat,
            aic: fit.aic,
            metrics,
        };
        Ok((fold, predicted))
    };
    let results: Vec<Result<(Fold, Vec<f64>)>> =
        pool(jobs)?.install(|| (0..n).into_par_iter().map(run_fold).collect());
    let mut folds = Vec::with_capacity(n);
    let mut preds = Array2::zeros(prepared.data.y.values().dim());
    for r in results {
        let (fold, p) = r?;
        preds.row_mut(fold.held_out).assign(&Array1::from(p));
        folds.push(fold);
    }
    let stat = |f: fn(&MetricsReport) -> Option<f64>| {
        let values: Vec<f64> = folds.iter().filter_map(|fd| fd.metrics.as_ref().and_then(f)).collect();
        (!values.is_empty()).then(|| MeanSd::of(&values))
    };
    let summary = FoldSummary {
        r2: stat(|m| Some(m.r2_mean)),
        rmse: stat(|m| Some(m.rmse)),
        cross_entropy: stat(|m| Some(m.cross_entropy)),
        aic: MeanSd::of(&folds.iter().map(|f| f.aic).collect::<Vec<_>>()),
        cosine_similarity: stat(|m| Some(m.cosine_similarity)),
    };
    let held_out_metrics = MetricsReport::compute(prepared.data.y.values(), preds.view(), None).ok();
    let not_converged = folds.iter().filter(|f| !f.converged).count();
    let model_label = match (model, prepared.weights.is_some()) {
        (ModelChoice::Dirichlet, false) => "dirichlet",
        (ModelChoice::Dirichlet, true) => "dirichlet_spatial",
        (ModelChoice::Multinomial, false) => "multinomial",
        (ModelChoice::Multinomial, true) => "multinomial_spatial",
    };
    let doc = LoocvDocument {
        data: prepared.summary,
        model: model_label.into(),
        order: args.data.order,
        protocol: LoocvProtocol {
            folds: n,
            ..LOOCV_PROTOCOL
        },
        summary,
        held_out_metrics,
        not_converged,
        folds,
    };
    let text = loocv_summary(&doc);
    emit(&Envelope::new("sardir.loocv", seed, doc), out)?;
    print_summary(&text, out);
    Ok(if not_converged == 0 {
        Status::Success
    } else {
        Status::NotConverged
    })
}

fn synthetic_config(args: &StudyArgs, config: &Config, seed: u64, reps: Option<usize>) -> Result<SyntheticConfig> {
    let generator: GeneratorChoice = match args.generator {
        Some(g) => g,
        None => config.get("generator")?.unwrap_or(GeneratorChoice::Dirichlet),
    };
    let n = config.resolve(args.n, "n", 1000)?;
    let rho = config.resolve(args.rho, "rho", 0.5)?;
    let base = match Generator::from(generator) {
        Generator::Dirichlet => SyntheticConfig::dirichlet(n, rho),
        Generator::Multinomial => SyntheticConfig::multinomial(n, rho),
    };
    let synthetic = SyntheticConfig {
        k_neighbors: config.resolve(args.k_neighbors, "k_neighbors", base.k_neighbors)?,
        row_normalize: config.resolve(args.row_normalize, "row_normalize", base.row_normalize)?,
        trial_range: (
            config.resolve(args.trial_min, "trial_min", base.trial_range.0)?,
            config.resolve(args.trial_max, "trial_max", base.trial_range.1)?,
        ),
        replications: config.resolve(reps, "reps", base.replications)?,
        seed,
        ..base
    };
    synthetic
        .validate()
        .map_err(|e| CliError::input("synthetic configuration", e))?;
    Ok(synthetic)
}

fn matrix_csv(path: &Path, headers: &[String], m: ndarray::ArrayView2<'_, f64>) -> Result<()> {
    let write_err = |e: csv::Error| CliError::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(write_err)?;
    w.write_record(headers).map_err(write_err)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(write_err)?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn simulate(args: &StudyArgs, config: &Config, seed: u64, out: Option<&Path>) -> Result<Status> {
    let dir = out.ok_or_else(|| CliError::Usage("simulate needs --out DIR".into()))?;
    std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let synthetic = synthetic_config(args, config, seed, Some(1))?;
    let data = generate_dataset(&synthetic, 0)?;
    let names = |prefix: &str, k: usize| -> Vec<String> { (0..k).map(|i| format!("{prefix}{i}")).collect() };

    let x = data.design.x.slice(s![.., 1..]);
    let z = data.design.z.slice(s![.., 1..]);
    let y = data.y.values();
    let w = data.weights.weights();
    let mut files = vec![
        ("features.csv", names("x", x.ncols()), x),
        ("precision.csv", names("z", z.ncols()), z),
        ("labels.csv", names("y", y.ncols()), y),
        ("weights.csv", names("w", w.ncols()), w),
    ];
    let trials = data
        .trials
        .as_ref()
        .map(|t| Array2::from_shape_fn((t.len(), 1), |(i, _)| t.counts()[i] as f64));
    if let Some(t) = &trials {
        files.push(("trials.csv", vec!["trials".to_string()], t.view()));
    }
    for (name, headers, m) in &files {
        matrix_csv(&dir.join(name), headers, m.view())?;
    }
    let doc = SimulateDocument {
        assumptions: generator_assumptions(&synthetic),
        config: synthetic,
        files: files.iter().map(|f| f.0.to_string()).collect(),
    };
    emit(&Envelope::new("sardir.simulate", seed, doc), Some(&dir.join("simulation.json")))?;
    info!("wrote {} files to {}", files.len() + 1, dir.display());
    Ok(Status::Success)
}

fn study_models(args: &ReplicateArgs, config: &Config, generator: Generator) -> Result<Vec<ModelKind>> {
    let names: Vec<ModelName> = if !args.models.is_empty() {
        args.models.clone()
    } else if let Some(raw) = config.get::<String>("models")? {
        raw.split(',')
            .map(|m| m.trim().parse().map_err(|e: String| CliError::Config(e)))
            .collect::<Result<_>>()?
    } else {
        match generator {
            Generator::Dirichlet => vec![ModelName::Dirichlet, ModelName::DirichletSpatial],
            Generator::Multinomial => vec![ModelName::DirichletSpatial, ModelName::MultinomialSpatial],
        }
    };
    Ok(names.into_iter().map(ModelKind::from).collect())
}

fn replicate(args: &ReplicateArgs, config: &Config, seed: u64, jobs: usize, out: Option<&Path>) -> Result<Status> {
    let synthetic = synthetic_config(&args.study, config, seed, args.reps)?;
    let study = StudyConfig {
        models: study_models(args, config, synthetic.generator)?,
        fit: fit_config(&args.optim, None, config, seed)?,
        synthetic,
    };
    let table = run_replication_study(&study, jobs)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, table.to_csv()).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
    }
    let not_converged = table.tallies.iter().any(|t| t.not_converged > 0 || !t.errors.is_empty());
    let text = replicate_summary(&table);
    let doc = ReplicateDocument {
        config: study.synthetic,
        table,
    };
    emit(&Envelope::new("sardir.replicate", seed, doc), out)?;
    print_summary(&text, out);
    Ok(if not_converged {
        Status::NotConverged
    } else {
        Status::Success
    })
}

fn predict_study(args: &ReplicateArgs, config: &Config, seed: u64, out: Option<&Path>) -> Result<Status> {
    let synthetic = synthetic_config(&args.study, config, seed, Some(1))?;
    let models = study_models(args, config, synthetic.generator)?;
    let fit_config = fit_config(&args.optim, None, config, seed)?;
    let data = generate_dataset(&synthetic, 0)?;
    let mut fits = Vec::with_capacity(models.len());
    for &model in &models {
        let fit = model.fit(&data, &fit_config)?;
        fits.push(PredictionFit {
            model: model.label().into(),
            converged: fit.converged,
            fit,
        });
    }
    let fitted: Vec<(ModelKind, _)> = models
        .iter()
        .zip(&fits)
        .map(|(&m, f)| (m, f.fit.params.clone()))
        .collect();
    let predictions = run_prediction_study(&synthetic, &fitted)?;
    let all_converged = fits.iter().all(|f| f.converged);
    let text = predict_summary(&predictions);
    let doc = PredictDocument {
        assumptions: generator_assumptions(&synthetic),
        config: synthetic,
        fits,
        predictions,
    };
    emit(&Envelope::new("sardir.predict_study", seed, doc), out)?;
    print_summary(&text, out);
    Ok(if all_converged {
        Status::Success
    } else {
        Status::NotConverged
    })
}
