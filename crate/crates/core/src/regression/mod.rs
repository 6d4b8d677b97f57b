//! Linear maps `Y = A X + C` fitted from snapshot matrices.
//!
//! Three engines share one model type: ordinary least squares (minimum
//! norm), NIPALS partial least squares and sparse Bayesian regression.
//! Data are centered before fitting and the constants are recovered from
//! the means. Rows of `X` with no variance are left out of the fit and get
//! zero coefficients; their effect ends up in `C`.

mod blr;
mod ols;
mod pls;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blr::{blr_fit, BlrConfig, BlrMeta};
pub use ols::{ols_fit, OlsConfig, OlsMeta};
pub use pls::{nipals, pls_fit, PlsConfig, PlsMeta, PlsState};

/// Variable-major design: one row per variable, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Means removed so far; zero until [`center`] is applied.
    pub x_mean: DVector<f64>,
    pub y_mean: DVector<f64>,
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
    centered: bool,
}

impl DesignMatrices {
    pub fn new(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        x_labels: Vec<String>,
        y_labels: Vec<String>,
    ) -> Result<Self> {
        if x.ncols() != y.ncols() {
            return Err(Error::InvalidInput(format!(
                "X has {} samples but Y has {}",
                x.ncols(),
                y.ncols()
            )));
        }
        if x.ncols() < 2 {
            return Err(Error::InvalidInput(
                "at least two samples are required".into(),
            ));
        }
        if x_labels.len() != x.nrows() || y_labels.len() != y.nrows() {
            return Err(Error::InvalidInput(
                "label count does not match matrix rows".into(),
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "design matrices contain non-finite values".into(),
            ));
        }
        let (nx, ny) = (x.nrows(), y.nrows());
        Ok(DesignMatrices {
            x,
            y,
            x_mean: DVector::zeros(nx),
            y_mean: DVector::zeros(ny),
            x_labels,
            y_labels,
            centered: false,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }
}

/// Removes the row means of `X` and `Y`, keeping them for constant
/// recovery. Centering twice changes nothing.
pub fn center(dm: &DesignMatrices) -> DesignMatrices {
    if dm.centered {
        return dm.clone();
    }
    let mut out = dm.clone();
    let xm = dm.x.column_mean();
    let ym = dm.y.column_mean();
    for mut col in out.x.column_iter_mut() {
        col -= &xm;
    }
    for mut col in out.y.column_iter_mut() {
        col -= &ym;
    }
    out.x_mean += xm;
    out.y_mean += ym;
    out.centered = true;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Ols,
    Pls,
    Blr,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Ols => "ols",
            Engine::Pls => "pls",
            Engine::Blr => "blr",
        }
    }

    pub const ALL: [Engine; 3] = [Engine::Ols, Engine::Pls, Engine::Blr];
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ols" | "ls" => Ok(Engine::Ols),
            "pls" => Ok(Engine::Pls),
            "blr" => Ok(Engine::Blr),
            other => Err(Error::InvalidInput(format!(
                "unknown engine {other:?} (expected ols, pls or blr)"
            ))),
        }
    }
}

/// Engine selection with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "lowercase")]
pub enum EngineConfig {
    Ols(OlsConfig),
    Pls(PlsConfig),
    Blr(BlrConfig),
}

impl EngineConfig {
    pub fn default_for(engine: Engine) -> Self {
        match engine {
            Engine::Ols => EngineConfig::Ols(OlsConfig::default()),
            Engine::Pls => EngineConfig::Pls(PlsConfig::default()),
            Engine::Blr => EngineConfig::Blr(BlrConfig::default()),
        }
    }

    pub fn engine(&self) -> Engine {
        match self {
            EngineConfig::Ols(_) => Engine::Ols,
            EngineConfig::Pls(_) => Engine::Pls,
            EngineConfig::Blr(_) => Engine::Blr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub engine: Engine,
    pub n_samples: usize,
    /// Labels of `X` rows left out for having no variance.
    pub constant_inputs: Vec<String>,
    /// Fraction of entries of `A` that are nonzero.
    pub nonzero_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ols: Option<OlsMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pls: Option<PlsMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blr: Option<BlrMeta>,
}

/// `Y = A X + C` with labeled rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub x_labels: Vec<String>,
    pub y_labels: Vec<String>,
    pub hyperparams: EngineConfig,
    pub fit_meta: FitMeta,
}

impl LinearModel {
    pub fn engine(&self) -> Engine {
        self.fit_meta.engine
    }

    /// `A x + C` for a single sample, without label checks.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let y = &self.a * DVector::from_column_slice(x) + &self.c;
        y.iter().copied().collect()
    }

    pub fn to_export(&self) -> ModelExport {
        ModelExport {
            engine: self.engine(),
            hyperparams: self.hyperparams.clone(),
            labels: Labels {
                rows: self.y_labels.clone(),
                cols: self.x_labels.clone(),
            },
            a: self
                .a
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            c: self.c.iter().copied().collect(),
            fit_meta: self.fit_meta.clone(),
        }
    }

    pub fn from_export(ex: ModelExport) -> Result<Self> {
        let rows = ex.labels.rows.len();
        let cols = ex.labels.cols.len();
        if ex.a.len() != rows || ex.a.iter().any(|r| r.len() != cols) || ex.c.len() != rows {
            return Err(Error::Parse(
                "model matrix shape does not match its labels".into(),
            ));
        }
        let flat: Vec<f64> = ex.a.iter().flatten().copied().collect();
        Ok(LinearModel {
            a: DMatrix::from_row_slice(rows, cols, &flat),
            c: DVector::from_vec(ex.c),
            x_labels: ex.labels.cols,
            y_labels: ex.labels.rows,
            hyperparams: ex.hyperparams,
            fit_meta: ex.fit_meta,
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_export())? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ex: ModelExport =
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_export(ex)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
}

/// JSON form of a [`LinearModel`]; `A` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub engine: Engine,
    pub hyperparams: EngineConfig,
    pub labels: Labels,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub fit_meta: FitMeta,
}

/// Fits with the configured engine.
pub fn fit(dm: &DesignMatrices, cfg: &EngineConfig) -> Result<LinearModel> {
    match cfg {
        EngineConfig::Ols(c) => ols_fit(dm, c),
        EngineConfig::Pls(c) => pls_fit(dm, c),
        EngineConfig::Blr(c) => blr_fit(dm, c),
    }
}

/// `A X + C` for sample columns of `x`, whose rows must carry `labels`
/// in the model's column order.
pub fn predict(model: &LinearModel, labels: &[String], x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if labels != model.x_labels.as_slice() {
        return Err(Error::LabelMismatch(format!(
            "model expects inputs [{}], got [{}]",
            abbreviate(&model.x_labels),
            abbreviate(labels)
        )));
    }
    if x.nrows() != labels.len() {
        return Err(Error::InvalidInput("input rows do not match labels".into()));
    }
    let mut y = &model.a * x;
    for mut col in y.column_iter_mut() {
        col += &model.c;
    }
    Ok(y)
}

fn abbreviate(labels: &[String]) -> String {
    if labels.len() <= 6 {
        labels.join(", ")
    } else {
        format!("{}, … ({} total)", labels[..4].join(", "), labels.len())
    }
}

/// Centered data restricted to the rows of `X` that vary.
pub(crate) struct Prepared {
    pub dm: DesignMatrices,
    pub active: Vec<usize>,
    /// Sample-major centered active inputs, T × M.
    pub xs: DMatrix<f64>,
    /// Sample-major centered outputs, T × N_y.
    pub ys: DMatrix<f64>,
}

pub(crate) fn prepare(dm: &DesignMatrices) -> Prepared {
    let dm = center(dm);
    let t = dm.n_samples() as f64;
    let active: Vec<usize> = (0..dm.x.nrows())
        .filter(|&i| {
            let std = (dm.x.row(i).norm_squared() / t).sqrt();
            std > 1e-12 * dm.x_mean[i].abs().max(1.0)
        })
        .collect();
    let xs = dm.x.select_rows(&active).transpose();
    let ys = dm.y.transpose();
    Prepared { dm, active, xs, ys }
}

impl Prepared {
    /// Expands active-column coefficients to the full model and recovers the
    /// constants from the means.
    pub fn finish(
        self,
        a_active: DMatrix<f64>,
        hyperparams: EngineConfig,
        mut meta: FitMeta,
    ) -> LinearModel {
        let dm = self.dm;
        let mut a = DMatrix::zeros(dm.y.nrows(), dm.x.nrows());
        for (k, &i) in self.active.iter().enumerate() {
            a.set_column(i, &a_active.column(k));
        }
        let c = &dm.y_mean - &a * &dm.x_mean;
        meta.constant_inputs = (0..dm.x.nrows())
            .filter(|i| !self.active.contains(i))
            .map(|i| dm.x_labels[i].clone())
            .collect();
        let total = a.len().max(1) as f64;
        meta.nonzero_fraction = a.iter().filter(|v| **v != 0.0).count() as f64 / total;
        meta.n_samples = dm.n_samples();
        LinearModel {
            a,
            c,
            x_labels: dm.x_labels,
            y_labels: dm.y_labels,
            hyperparams,
            fit_meta: meta,
        }
    }
}

pub(crate) fn empty_meta(engine: Engine) -> FitMeta {
    FitMeta {
        engine,
        n_samples: 0,
        constant_inputs: Vec::new(),
        nonzero_fraction: 0.0,
        ols: None,
        pls: None,
        blr: None,
    }
}
