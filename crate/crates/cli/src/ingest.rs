//! CSV ingestion of features, labels and spatial weights.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use ndarray::{Array2, Axis};
use sardir::compdata::{validate_composition, CompositionMatrix};
use sardir::spatial::{
    build_inverse_distance_weights, build_knn_weights, row_normalize, SpatialWeights,
};
use serde::Serialize;

use crate::config::parse_key_values;
use crate::error::{CliError, Result};

/// A numeric CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub values: Array2<f64>,
}

impl Table {
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn columns(&self, names: &[String]) -> Array2<f64> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.headers.iter().position(|h| h == n).expect("known column"))
            .collect();
        self.values.select(Axis(1), &idx)
    }
}

fn csv_error(path: &Path, source: csv::Error) -> CliError {
    let path = path.to_path_buf();
    if source.is_io_error() {
        if let csv::ErrorKind::Io(source) = source.into_kind() {
            return CliError::Io { path, source };
        }
        unreachable!()
    }
    CliError::Csv { path, source }
}

/// Reads a UTF-8 CSV whose cells are all numbers with a `.` decimal point.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        rows += 1;
        for (c, cell) in record.iter().enumerate() {
            let v = cell.parse::<f64>().map_err(|_| CliError::Parse {
                path: path.to_path_buf(),
                row: rows,
                col: c + 1,
                name: headers[c].clone(),
                value: cell.to_string(),
            })?;
            data.push(v);
        }
    }
    let values = Array2::from_shape_vec((rows, headers.len()), data).expect("rectangular CSV");
    Ok(Table { headers, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Label,
    Feature,
    Precision,
    Trials,
    Ignore,
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "label" => Ok(Self::Label),
            "feature" => Ok(Self::Feature),
            "precision" => Ok(Self::Precision),
            "trials" => Ok(Self::Trials),
            "ignore" => Ok(Self::Ignore),
            other => Err(format!(
                "unknown role {other:?} (label, feature, precision, trials, ignore)"
            )),
        }
    }
}

/// Maps every column name of the input files to a role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    roles: BTreeMap<String, Role>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text).map_err(CliError::Manifest)?;
        let roles = kv
            .into_iter()
            .map(|(k, v)| {
                v.parse()
                    .map(|r| (k.clone(), r))
                    .map_err(|e| CliError::Manifest(format!("{k}: {e}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { roles })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn role(&self, column: &str) -> Option<Role> {
        self.roles.get(column).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScale {
    /// Rows sum to 1.
    #[default]
    Unit,
    /// Rows sum to 100; divided by 100 on ingestion.
    Percent,
}

impl FromStr for LabelScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unit" => Ok(Self::Unit),
            "percent" => Ok(Self::Percent),
            other => Err(format!("unknown label scale {other:?} (unit, percent)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct DataFiles {
    pub features: PathBuf,
    pub labels: PathBuf,
    pub precision: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LabelOptions {
    pub scale: LabelScale,
    /// Divide each row by its sum before validation.
    pub close: bool,
}

/// Column-selected matrices of one dataset, rows aligned.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub label_names: Vec<String>,
    pub y: CompositionMatrix,
    pub precision_names: Vec<String>,
    pub z: Option<Array2<f64>>,
    pub trials: Option<Vec<u64>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// Loads features, labels and an optional precision design. With a
/// manifest, every column of every file must have a role and columns are
/// picked by role; without one, each file contributes all its columns.
pub fn load_dataset(files: &DataFiles, labels: LabelOptions) -> Result<Dataset> {
    let manifest = files.manifest.as_deref().map(Manifest::load).transpose()?;
    let mut tables: Vec<(PathBuf, Table)> = Vec::new();
    let mut table_of = |path: &Path| -> Result<usize> {
        if let Some(i) = tables.iter().position(|(p, _)| p == path) {
            return Ok(i);
        }
        tables.push((path.to_path_buf(), read_table(path)?));
        Ok(tables.len() - 1)
    };
    let fi = table_of(&files.features)?;
    let li = table_of(&files.labels)?;
    let pi = files.precision.as_deref().map(&mut table_of).transpose()?;

    let n = tables[fi].1.nrows();
    for (path, t) in &tables {
        if t.nrows() != n {
            return Err(CliError::RowCountMismatch(format!(
                "{} has {} rows, {} has {n}",
                path.display(),
                t.nrows(),
                files.features.display()
            )));
        }
    }

    let pick = |i: usize, role: Role| -> Vec<String> {
        let headers = &tables[i].1.headers;
        match &manifest {
            Some(m) => headers
                .iter()
                .filter(|h| m.role(h) == Some(role))
                .cloned()
                .collect(),
            None => headers.clone(),
        }
    };
    let mut trials = None;
    if let Some(m) = &manifest {
        for (path, t) in &tables {
            for h in &t.headers {
                match m.role(h) {
                    None => {
                        return Err(CliError::Manifest(format!(
                            "column {h:?} of {} has no role",
                            path.display()
                        )))
                    }
                    Some(Role::Trials) if trials.is_none() => {
                        trials = Some(trial_column(path, t, h)?);
                    }
                    _ => {}
                }
            }
        }
    } else if fi == li {
        return Err(CliError::Usage(
            "features and labels share a file: pass --manifest to assign columns".into(),
        ));
    }

    let feature_names = pick(fi, Role::Feature);
    let label_names = pick(li, Role::Label);
    if label_names.is_empty() {
        return Err(CliError::Manifest("no label columns".into()));
    }
    let x = tables[fi].1.columns(&feature_names);
    let mut y = tables[li].1.columns(&label_names);
    if labels.scale == LabelScale::Percent {
        y /= 100.0;
    }
    if labels.close {
        for (i, mut row) in y.axis_iter_mut(Axis(0)).enumerate() {
            let sum = row.sum();
            if sum.is_nan() || sum <= 0.0 {
                return Err(CliError::input(
                    format!("labels row {}", i + 1),
                    sardir::Error::ZeroRow(i),
                ));
            }
            row /= sum;
        }
    }
    let y = validate_composition(y).map_err(|e| CliError::input("labels", e))?;
    let (precision_names, z) = match pi {
        Some(i) => {
            let names = pick(i, Role::Precision);
            let z = tables[i].1.columns(&names);
            (names, Some(z))
        }
        None => (Vec::new(), None),
    };
    Ok(Dataset {
        feature_names,
        x,
        label_names,
        y,
        precision_names,
        z,
        trials,
    })
}

fn trial_column(path: &Path, table: &Table, name: &str) -> Result<Vec<u64>> {
    let col = table.headers.iter().position(|h| h == name).expect("known column");
    table
        .values
        .column(col)
        .iter()
        .enumerate()
        .map(|(r, &v)| {
            if v >= 1.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(CliError::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    col: col + 1,
                    name: name.to_string(),
                    value: v.to_string(),
                })
            }
        })
        .collect()
}

/// Where a weights matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightsSpec {
    /// Dense `n x n` CSV, or an `i,j,w` coordinate list with 0-based indices.
    File(PathBuf),
    Knn(usize),
    InverseDistance(f64),
}

impl FromStr for WeightsSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(k) = s.strip_prefix("knn:") {
            return k
                .parse()
                .map(Self::Knn)
                .map_err(|_| format!("knn:{k}: k must be a positive integer"));
        }
        if let Some(c) = s.strip_prefix("invdist:") {
            return c
                .parse()
                .map(Self::InverseDistance)
                .map_err(|_| format!("invdist:{c}: cutoff must be a number"));
        }
        Ok(Self::File(PathBuf::from(s)))
    }
}

impl WeightsSpec {
    pub fn describe(&self) -> String {
        match self {
            Self::File(_) => "file".into(),
            Self::Knn(k) => format!("knn:{k}"),
            Self::InverseDistance(c) => format!("invdist:{c}"),
        }
    }
}

/// Builds and validates the weights for `n` observations. Returns the
/// warnings raised on the way.
pub fn load_weights(
    spec: &WeightsSpec,
    n: usize,
    coords: Option<&Path>,
    normalize: bool,
) -> Result<(SpatialWeights, Vec<String>)> {
    let mut warnings = Vec::new();
    let built = match spec {
        WeightsSpec::File(path) => {
            let dense = read_weights_file(path, n, &mut warnings)?;
            SpatialWeights::from_dense(dense).map_err(|e| CliError::input(path.display().to_string(), e))
        }
        WeightsSpec::Knn(_) | WeightsSpec::InverseDistance(_) => {
            let path = coords.ok_or_else(|| {
                CliError::Usage(format!("--weights {} needs --coords", spec.describe()))
            })?;
            let table = read_table(path)?;
            if table.nrows() != n {
                return Err(CliError::RowCountMismatch(format!(
                    "{} has {} rows, expected {n}",
                    path.display(),
                    table.nrows()
                )));
            }
            match spec {
                WeightsSpec::Knn(k) => build_knn_weights(table.values.view(), *k),
                WeightsSpec::InverseDistance(c) => {
                    build_inverse_distance_weights(table.values.view(), *c)
                }
                WeightsSpec::File(_) => unreachable!(),
            }
            .map_err(|e| CliError::input("weights", e))
        }
    }?;
    let w = if normalize { row_normalize(built) } else { built };
    if !w.zero_rows().is_empty() {
        warnings.push(format!("{} rows of W have no neighbours", w.zero_rows().len()));
    }
    for msg in &warnings {
        warn!("{msg}");
    }
    Ok((w, warnings))
}

fn read_weights_file(path: &Path, n: usize, warnings: &mut Vec<String>) -> Result<Array2<f64>> {
    let table = read_table(path)?;
    let is_list = table.headers.len() == 3
        && table.headers.iter().zip(["i", "j", "w"]).all(|(h, e)| h == e);
    if !is_list {
        let (rows, cols) = table.values.dim();
        if rows != n && rows == cols {
            return Err(CliError::RowCountMismatch(format!(
                "{} is {rows}x{cols} but there are {n} observations",
                path.display()
            )));
        }
        return Ok(table.values);
    }
    let mut dense = Array2::zeros((n, n));
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for (r, entry) in table.values.rows().into_iter().enumerate() {
        let index = |c: usize| -> Result<usize> {
            let v = entry[c];
            if v >= 0.0 && v.fract() == 0.0 && (v as usize) < n {
                Ok(v as usize)
            } else {
                Err(CliError::Parse {
                    path: path.to_path_buf(),
                    row: r + 1,
                    col: c + 1,
                    name: table.headers[c].clone(),
                    value: v.to_string(),
                })
            }
        };
        let (i, j) = (index(0)?, index(1)?);
        if let Some(prev) = seen.insert((i, j), r + 1) {
            warnings.push(format!(
                "{}: entry ({i}, {j}) on row {} overrides row {prev}",
                path.display(),
                r + 1
            ));
        }
        dense[[i, j]] = entry[2];
    }
    Ok(dense)
}
