//! Error metrics, method comparisons and regression-matrix similarity.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    constant_jacobian, dcpf_branch_flows, dcpf_forward, dcpf_solve, dlpf_branch_flows,
    reduced_b_inverse, DlpfBoundary, DlpfModel,
};
use crate::error::{Error, Result};
use crate::mapping::{
    fit_branch, fit_forward, fit_inverse, partition_inverse, predict_dataset, BranchInput,
    ForwardModel, InverseModel, MappingModel, DEFAULT_COND_THRESHOLD,
};
use crate::network::{bus_ordering, AdmittanceSet, NetworkCase};
use crate::regression::{EngineConfig, LinearModel};
use crate::scenario::{format_g17, SnapshotDataset};

/// Default MAPE exclusion floor in p.u.
pub const DEFAULT_MAPE_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MAPE_percent")]
    MapePercent,
    #[serde(rename = "MAE")]
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub quantity: String,
    pub metric: Metric,
    pub value: f64,
    pub n_points: usize,
    pub n_excluded: usize,
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "prediction has {} entries, truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Mean of `100·|pred − truth| / |truth|` over entries with `|truth| ≥ eps`.
pub fn mape(quantity: &str, pred: &[f64], truth: &[f64], eps: f64) -> Result<ErrorStats> {
    check_lengths(pred, truth)?;
    let mut sum = 0.0;
    let mut n = 0;
    for (p, t) in pred.iter().zip(truth) {
        if t.abs() >= eps {
            sum += 100.0 * (p - t).abs() / t.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput(format!(
            "every {quantity} value is below the MAPE floor {eps:e}; use MAE instead"
        )));
    }
    Ok(ErrorStats {
        quantity: quantity.into(),
        metric: Metric::MapePercent,
        value: sum / n as f64,
        n_points: n,
        n_excluded: truth.len() - n,
    })
}

pub fn mae(quantity: &str, pred: &[f64], truth: &[f64]) -> Result<ErrorStats> {
    check_lengths(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(ErrorStats {
        quantity: quantity.into(),
        metric: Metric::Mae,
        value: if truth.is_empty() {
            0.0
        } else {
            sum / truth.len() as f64
        },
        n_points: truth.len(),
        n_excluded: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
    Branch,
}

/// One method × quantity entry of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: String,
    pub direction: Direction,
    pub quantity: String,
    pub test: Option<ErrorStats>,
    /// Same metric on the training set; data-driven methods only.
    pub train: Option<ErrorStats>,
    pub error: Option<String>,
}

impl Cell {
    /// `test − train`, the overfitting gap.
    pub fn gap(&self) -> Option<f64> {
        Some(self.test.as_ref()?.value - self.train.as_ref()?.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mape_eps: f64,
    pub branch_input: BranchInput,
    pub cond_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mape_eps: DEFAULT_MAPE_EPS,
            branch_input: BranchInput::Injections,
            cond_threshold: DEFAULT_COND_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub case: String,
    pub n_train: usize,
    pub n_test: usize,
    pub methods: Vec<String>,
    pub cells: Vec<Cell>,
    pub config: EvalConfig,
    pub engines: Vec<EngineConfig>,
}

/// Column order of the text table.
const COLUMNS: [(Direction, &str); 6] = [
    (Direction::Forward, "P"),
    (Direction::Forward, "Q"),
    (Direction::Inverse, "theta"),
    (Direction::Inverse, "V"),
    (Direction::Branch, "PF"),
    (Direction::Branch, "QF"),
];

impl EvaluationReport {
    pub fn cell(&self, method: &str, direction: Direction, quantity: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| {
            c.method.eq_ignore_ascii_case(method)
                && c.direction == direction
                && c.quantity == quantity
        })
    }

    /// Test-set value of a cell, if it was computed.
    pub fn value(&self, method: &str, direction: Direction, quantity: &str) -> Option<f64> {
        self.cell(method, direction, quantity)?
            .test
            .as_ref()
            .map(|s| s.value)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table in the usual forward / inverse / branch layout.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "case {}: {} training / {} test snapshots",
            self.case, self.n_train, self.n_test
        );
        let _ = writeln!(
            out,
            "P, Q, PF, QF: MAPE in percent (entries with |truth| < {:e} p.u. excluded)",
            self.config.mape_eps
        );
        let _ = writeln!(
            out,
            "theta: MAE in rad over non-slack buses; V: MAE in p.u. over PQ buses"
        );
        let _ = writeln!(out);
        let head = ["fwd P", "fwd Q", "inv theta", "inv V", "br PF", "br QF"];
        let _ = write!(out, "{:<8}", "method");
        for h in head {
            let _ = write!(out, "{h:>13}");
        }
        let _ = writeln!(out);
        for m in &self.methods {
            let _ = write!(out, "{m:<8}");
            for (d, q) in COLUMNS {
                let text = match self.cell(m, d, q) {
                    None => "-".to_string(),
                    Some(c) => match (&c.test, &c.error) {
                        (Some(s), _) => format!("{:.4e}", s.value),
                        (None, _) => "error".to_string(),
                    },
                };
                let _ = write!(out, "{text:>13}");
            }
            let _ = writeln!(out);
        }
        let gaps: Vec<&Cell> = self.cells.iter().filter(|c| c.train.is_some()).collect();
        if !gaps.is_empty() {
            let _ = writeln!(out);
            let _ = writeln!(out, "train/test gap (test minus train)");
            let _ = write!(out, "{:<8}", "method");
            for h in head {
                let _ = write!(out, "{h:>13}");
            }
            let _ = writeln!(out);
            for m in &self.methods {
                if !gaps.iter().any(|c| &c.method == m) {
                    continue;
                }
                let _ = write!(out, "{m:<8}");
                for (d, q) in COLUMNS {
                    let text = self
                        .cell(m, d, q)
                        .and_then(Cell::gap)
                        .map_or("-".to_string(), |g| format!("{g:+.3e}"));
                    let _ = write!(out, "{text:>13}");
                }
                let _ = writeln!(out);
            }
        }
        let errors: Vec<&Cell> = self.cells.iter().filter(|c| c.error.is_some()).collect();
        if !errors.is_empty() {
            let _ = writeln!(out);
            for c in errors {
                let _ = writeln!(
                    out,
                    "{} {:?} {}: {}",
                    c.method,
                    c.direction,
                    c.quantity,
                    c.error.as_deref().unwrap_or_default()
                );
            }
        }
        out
    }
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}

fn metric(quantity: &str, pred: &[f64], truth: &[f64], eps: f64) -> Result<ErrorStats> {
    match quantity {
        "theta" | "V" => mae(quantity, pred, truth),
        _ => mape(quantity, pred, truth, eps),
    }
}

fn labels_of(case: &NetworkCase, prefix: &str, idx: &[usize]) -> Vec<String> {
    idx.iter()
        .map(|&k| format!("{prefix}_{}", case.buses[k].id))
        .collect()
}

/// Quantities reported for a direction, with the labels they cover.
fn targets(case: &NetworkCase, direction: Direction) -> Vec<(&'static str, Vec<String>)> {
    let ord = bus_ordering(case);
    let l = case.n_flows();
    match direction {
        Direction::Forward => vec![
            ("P", labels_of(case, "P", &ord.perm)),
            ("Q", labels_of(case, "Q", &ord.perm)),
        ],
        Direction::Inverse => vec![
            ("theta", labels_of(case, "theta", ord.non_slack())),
            ("V", labels_of(case, "V", ord.pq())),
        ],
        Direction::Branch => vec![
            ("PF", (1..=l).map(|k| format!("PF_{k}")).collect()),
            ("QF", (1..=l).map(|k| format!("QF_{k}")).collect()),
        ],
    }
}

/// Rows of `pred` (labelled `pred_labels`) matching `wanted`.
fn select(pred: &DMatrix<f64>, pred_labels: &[String], wanted: &[String]) -> Result<DMatrix<f64>> {
    let idx: Vec<usize> = wanted
        .iter()
        .map(|w| {
            pred_labels
                .iter()
                .position(|l| l == w)
                .ok_or_else(|| Error::LabelMismatch(format!("prediction has no {w}")))
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(idx.len(), pred.ncols(), |r, c| {
        pred[(idx[r], c)]
    }))
}

/// Baseline predictions on every snapshot of `ds`: `(row labels, values)`
/// with one column per snapshot.
fn baseline(
    method: &str,
    direction: Direction,
    case: &NetworkCase,
    adm: &AdmittanceSet,
    dlpf: &DlpfModel,
    ds: &SnapshotDataset,
) -> Result<(Vec<String>, DMatrix<f64>)> {
    let n = case.n_buses();
    let slack = case.slack_index();
    let all: Vec<usize> = (0..n).collect();
    let flows: Vec<String> = (1..=case.n_flows()).map(|k| format!("PF_{k}")).collect();
    let labels = match (method, direction) {
        ("DCPF", Direction::Forward) => labels_of(case, "P", &all),
        ("DLPF", Direction::Forward) => {
            [labels_of(case, "P", &all), labels_of(case, "Q", &all)].concat()
        }
        ("DCPF", Direction::Inverse) => labels_of(case, "theta", &all),
        ("DLPF", Direction::Inverse) => {
            [labels_of(case, "theta", &all), labels_of(case, "V", &all)].concat()
        }
        (_, Direction::Branch) => flows,
        _ => return Err(Error::InvalidInput(format!("unknown baseline {method}"))),
    };
    let mut out = DMatrix::zeros(labels.len(), ds.n_rows());
    for t in 0..ds.n_rows() {
        let [p, q, v, theta, _, _] = ds.row_parts(t, n);
        let th0 = theta[slack];
        let rel: Vec<f64> = theta.iter().map(|a| a - th0).collect();
        let values: Vec<f64> = match (method, direction) {
            ("DCPF", Direction::Forward) => dcpf_forward(adm, &rel),
            ("DCPF", Direction::Inverse) => {
                dcpf_solve(case, adm, &p)?.iter().map(|a| a + th0).collect()
            }
            ("DCPF", _) => dcpf_branch_flows(case, adm, &dcpf_solve(case, adm, &p)?),
            ("DLPF", Direction::Forward) => {
                let (pp, qq) = dlpf.forward(&rel, &v);
                [pp, qq].concat()
            }
            _ => {
                let boundary = DlpfBoundary {
                    v,
                    theta_slack: 0.0,
                };
                let (th, vv) = dlpf.solve(&p, &q, &boundary)?;
                if direction == Direction::Inverse {
                    th.iter().map(|a| a + th0).chain(vv).collect()
                } else {
                    dlpf_branch_flows(adm, &th, &vv)
                }
            }
        };
        out.set_column(t, &nalgebra::DVector::from_vec(values));
    }
    Ok((labels, out))
}

fn stats_for(
    quantity: &str,
    wanted: &[String],
    labels: &[String],
    pred: &DMatrix<f64>,
    ds: &SnapshotDataset,
    eps: f64,
) -> Result<ErrorStats> {
    let p = select(pred, labels, wanted)?;
    let truth = ds.columns(wanted)?;
    metric(quantity, &flat(&p), &flat(&truth), eps)
}

fn baseline_cells(
    method: &str,
    case: &NetworkCase,
    adm: &AdmittanceSet,
    dlpf: &DlpfModel,
    test: &SnapshotDataset,
    eps: f64,
) -> Vec<Cell> {
    let mut cells = Vec::new();
    for direction in [Direction::Forward, Direction::Inverse, Direction::Branch] {
        let pred = baseline(method, direction, case, adm, dlpf, test);
        for (quantity, wanted) in targets(case, direction) {
            let applicable = match (method, quantity) {
                ("DCPF", "Q" | "V" | "QF") => false,
                ("DLPF", "QF") => false,
                _ => true,
            };
            if !applicable {
                continue;
            }
            let res = pred
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|(labels, m)| {
                    stats_for(quantity, &wanted, labels, m, test, eps).map_err(|e| e.to_string())
                });
            cells.push(Cell {
                method: method.into(),
                direction,
                quantity: quantity.into(),
                test: res.as_ref().ok().cloned(),
                train: None,
                error: res.err(),
            });
        }
    }
    cells
}

/// Predictions of a fitted mapping on `ds`, labelled.
type Predictor = Box<dyn Fn(&SnapshotDataset) -> Result<(Vec<String>, DMatrix<f64>)> + Send + Sync>;

fn fit_direction(
    direction: Direction,
    case: &NetworkCase,
    train: &SnapshotDataset,
    engine: &EngineConfig,
    cfg: &EvalConfig,
) -> Result<Predictor> {
    Ok(match direction {
        Direction::Forward => {
            let m = fit_forward(train, case, engine)?.model;
            Box::new(move |ds| Ok((m.y_labels.clone(), predict_dataset(&m, ds)?)))
        }
        Direction::Branch => {
            let m = fit_branch(train, case, engine, cfg.branch_input)?.model;
            Box::new(move |ds| Ok((m.y_labels.clone(), predict_dataset(&m, ds)?)))
        }
        Direction::Inverse => {
            let mut part = partition_inverse(&fit_inverse(train, case, engine)?)?;
            part.cond_threshold = cfg.cond_threshold;
            Box::new(move |ds| {
                let (y1, _) = part.solve_dataset(ds)?;
                Ok((part.y1_labels.clone(), y1))
            })
        }
    })
}

fn engine_cells(
    engine: &EngineConfig,
    case: &NetworkCase,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    cfg: &EvalConfig,
) -> Vec<Cell> {
    let name = engine.engine().as_str().to_uppercase();
    let mut cells = Vec::new();
    for direction in [Direction::Forward, Direction::Inverse, Direction::Branch] {
        let predictor = fit_direction(direction, case, train, engine, cfg);
        let on = |ds: &SnapshotDataset| {
            predictor
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|f| f(ds).map_err(|e| e.to_string()))
        };
        let (pred_train, pred_test) = (on(train), on(test));
        for (quantity, wanted) in targets(case, direction) {
            let eval = |pred: &std::result::Result<(Vec<String>, DMatrix<f64>), String>,
                        ds: &SnapshotDataset| {
                pred.as_ref().map_err(Clone::clone).and_then(|(labels, m)| {
                    stats_for(quantity, &wanted, labels, m, ds, cfg.mape_eps)
                        .map_err(|e| e.to_string())
                })
            };
            let te = eval(&pred_test, test);
            let tr = eval(&pred_train, train);
            cells.push(Cell {
                method: name.clone(),
                direction,
                quantity: quantity.into(),
                test: te.as_ref().ok().cloned(),
                train: tr.ok(),
                error: te.err(),
            });
        }
    }
    cells
}

/// Fits every mapping with every engine on `train` and scores all methods
/// on `test`. Fit and solve failures are recorded in their cells.
pub fn evaluate_all(
    case: &NetworkCase,
    adm: &AdmittanceSet,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    engines: &[EngineConfig],
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    train.check_case(case)?;
    test.check_case(case)?;
    let dlpf = DlpfModel::new(case, adm);
    let mut methods = vec!["DCPF".to_string(), "DLPF".to_string()];
    let mut cells = baseline_cells("DCPF", case, adm, &dlpf, test, cfg.mape_eps);
    cells.extend(baseline_cells("DLPF", case, adm, &dlpf, test, cfg.mape_eps));
    let per_engine: Vec<Vec<Cell>> = engines
        .par_iter()
        .map(|e| engine_cells(e, case, train, test, cfg))
        .collect();
    for (e, c) in engines.iter().zip(per_engine) {
        methods.push(e.engine().as_str().to_uppercase());
        cells.extend(c);
    }
    Ok(EvaluationReport {
        case: train.case_ref.clone(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        methods,
        cells,
        config: cfg.clone(),
        engines: engines.to_vec(),
    })
}

/// Worst absolute error at one bus over a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusError {
    pub label: String,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineContrast {
    pub engine: String,
    pub theta_mae: Option<f64>,
    pub v_mae: Option<f64>,
    pub worst_theta: Vec<BusError>,
    pub worst_v: Vec<BusError>,
    /// OLS only: the centered design was rank deficient or badly conditioned.
    pub ill_conditioned: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollinearityReport {
    pub case: String,
    pub n_train: usize,
    pub n_test: usize,
    /// Median pairwise correlation of active demand across load buses in
    /// the training set.
    pub median_load_correlation: f64,
    pub engines: Vec<EngineContrast>,
    /// `MAE_OLS / MAE_PLS` for θ.
    pub ols_over_pls_theta: Option<f64>,
    /// `MAE_OLS / MAE_BLR` for θ.
    pub ols_over_blr_theta: Option<f64>,
}

impl CollinearityReport {
    pub fn engine(&self, name: &str) -> Option<&EngineContrast> {
        self.engines
            .iter()
            .find(|e| e.engine.eq_ignore_ascii_case(name))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "case {}: inverse mapping, {} training / {} test snapshots, median load correlation {:.3}",
            self.case, self.n_train, self.n_test, self.median_load_correlation
        );
        let _ = writeln!(
            out,
            "{:<8}{:>13}{:>13}{:>13}{:>13}",
            "engine", "theta MAE", "V MAE", "worst theta", "worst V"
        );
        let fmt = |v: Option<f64>| v.map_or("error".to_string(), |v| format!("{v:.4e}"));
        let worst = |b: &[BusError]| {
            b.iter()
                .map(|e| e.worst)
                .fold(None, |m: Option<f64>, w| Some(m.map_or(w, |m| m.max(w))))
        };
        for e in &self.engines {
            let _ = writeln!(
                out,
                "{:<8}{:>13}{:>13}{:>13}{:>13}",
                e.engine,
                fmt(e.theta_mae),
                fmt(e.v_mae),
                fmt(worst(&e.worst_theta)),
                fmt(worst(&e.worst_v))
            );
        }
        if let Some(r) = self.ols_over_pls_theta {
            let _ = writeln!(out, "theta MAE ratio OLS/PLS: {r:.3}");
        }
        if let Some(r) = self.ols_over_blr_theta {
            let _ = writeln!(out, "theta MAE ratio OLS/BLR: {r:.3}");
        }
        for e in &self.engines {
            if let Some(err) = &e.error {
                let _ = writeln!(out, "{}: {err}", e.engine);
            }
        }
        out
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Median pairwise |Pearson correlation| of `P` across load buses (nonzero
/// preset demand) in `ds`.
pub fn median_load_correlation(case: &NetworkCase, ds: &SnapshotDataset) -> Result<f64> {
    let buses = crate::scenario::load_buses(case);
    let cols = ds.columns(&labels_of(case, "P", &buses))?;
    let rows: Vec<Vec<f64>> = cols
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let mut rho = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            rho.push(pearson(&rows[i], &rows[j]).abs());
        }
    }
    Ok(median(rho))
}

/// Inverse-mapping accuracy of each engine on (typically collinear)
/// profile data.
pub fn collinearity_contrast(
    case: &NetworkCase,
    train: &SnapshotDataset,
    test: &SnapshotDataset,
    engines: &[EngineConfig],
    cfg: &EvalConfig,
) -> Result<CollinearityReport> {
    train.check_case(case)?;
    test.check_case(case)?;
    let targets = targets(case, Direction::Inverse);
    let contrasts: Vec<EngineContrast> = engines
        .par_iter()
        .map(|engine| {
            let name = engine.engine().as_str().to_uppercase();
            let mut c = EngineContrast {
                engine: name,
                theta_mae: None,
                v_mae: None,
                worst_theta: Vec::new(),
                worst_v: Vec::new(),
                ill_conditioned: None,
                error: None,
            };
            let run = |c: &mut EngineContrast| -> Result<()> {
                let inv = fit_inverse(train, case, engine)?;
                c.ill_conditioned = inv.model.fit_meta.ols.as_ref().map(|m| m.ill_conditioned);
                let mut part = partition_inverse(&inv)?;
                part.cond_threshold = cfg.cond_threshold;
                let (y1, _) = part.solve_dataset(test)?;
                for (quantity, wanted) in &targets {
                    let pred = select(&y1, &part.y1_labels, wanted)?;
                    let truth = test.columns(wanted)?;
                    let err = (pred - &truth).abs();
                    let worst: Vec<BusError> = wanted
                        .iter()
                        .enumerate()
                        .map(|(r, label)| BusError {
                            label: label.clone(),
                            worst: err.row(r).max(),
                        })
                        .collect();
                    let mean = if err.is_empty() { 0.0 } else { err.mean() };
                    if *quantity == "theta" {
                        c.theta_mae = Some(mean);
                        c.worst_theta = worst;
                    } else {
                        c.v_mae = Some(mean);
                        c.worst_v = worst;
                    }
                }
                Ok(())
            };
            if let Err(e) = run(&mut c) {
                c.error = Some(e.to_string());
            }
            c
        })
        .collect();
    let theta = |name: &str| {
        contrasts
            .iter()
            .find(|c| c.engine == name)
            .and_then(|c| c.theta_mae)
    };
    let ratio = |other: &str| match (theta("OLS"), theta(other)) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    Ok(CollinearityReport {
        case: train.case_ref.clone(),
        n_train: train.n_rows(),
        n_test: test.n_rows(),
        median_load_correlation: median_load_correlation(case, train)?,
        ols_over_pls_theta: ratio("PLS"),
        ols_over_blr_theta: ratio("BLR"),
        engines: contrasts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMatrix {
    ConstantJacobian,
    BInverseReduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub reference: ReferenceMatrix,
    pub engine: String,
    pub frobenius_rel_error: f64,
    pub correlation: f64,
    /// Share of entries with `|ref| > 1e-6` whose regressed coefficient has
    /// the same sign.
    pub sign_agreement: f64,
    pub nonzero_fraction: f64,
    pub n_compared: usize,
    /// Inputs that were constant in training; their columns are zero by
    /// construction and left out of the statistics.
    pub excluded_columns: Vec<String>,
}

/// The two matrices a similarity report compares.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparedMatrices {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub reference: DMatrix<f64>,
    pub regression: DMatrix<f64>,
}

/// CSV with a label column and a header row.
pub fn matrix_csv(row_labels: &[String], col_labels: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::from("row");
    for c in col_labels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (r, label) in row_labels.iter().enumerate() {
        out.push_str(label);
        for c in 0..m.ncols() {
            out.push(',');
            out.push_str(&format_g17(m[(r, c)]));
        }
        out.push('\n');
    }
    out
}

fn check_buses(ids: &[usize], case: &NetworkCase) -> Result<()> {
    if ids.len() != case.n_buses() || ids.iter().zip(&case.buses).any(|(a, b)| *a != b.id) {
        return Err(Error::LabelMismatch(
            "model buses do not match the case".into(),
        ));
    }
    Ok(())
}

fn forward_matrices(
    m: &ForwardModel,
    case: &NetworkCase,
    adm: &AdmittanceSet,
) -> Result<ComparedMatrices> {
    check_buses(&m.bus_ids, case)?;
    Ok(ComparedMatrices {
        row_labels: m.model.y_labels.clone(),
        col_labels: m.model.x_labels.clone(),
        reference: constant_jacobian(case, adm).full_ordered(&m.ordering),
        regression: m.model.a.clone(),
    })
}

fn inverse_matrices(
    m: &InverseModel,
    case: &NetworkCase,
    adm: &AdmittanceSet,
) -> Result<ComparedMatrices> {
    check_buses(&m.bus_ids, case)?;
    let k = m.ordering.non_slack().len();
    Ok(ComparedMatrices {
        row_labels: m.model.y_labels[..k].to_vec(),
        col_labels: m.model.x_labels[..k].to_vec(),
        reference: reduced_b_inverse(adm, &m.ordering)?,
        regression: m.angle_block(),
    })
}

/// Compares a forward model with the constant Jacobian, or the angle
/// block of an inverse model with the slack-reduced `B⁻¹`.
pub fn matrix_similarity(
    model: &MappingModel,
    case: &NetworkCase,
    adm: &AdmittanceSet,
) -> Result<(SimilarityReport, ComparedMatrices)> {
    let (reference, mats, lin): (_, _, &LinearModel) =
        match model {
            MappingModel::Forward(m) => (
                ReferenceMatrix::ConstantJacobian,
                forward_matrices(m, case, adm)?,
                &m.model,
            ),
            MappingModel::Inverse(m) => (
                ReferenceMatrix::BInverseReduced,
                inverse_matrices(m, case, adm)?,
                &m.model,
            ),
            MappingModel::Branch(_) => return Err(Error::InvalidInput(
                "branch models have no physical reference matrix; use a forward or inverse model"
                    .into(),
            )),
        };
    let excluded: Vec<String> = mats
        .col_labels
        .iter()
        .filter(|l| lin.fit_meta.constant_inputs.contains(l))
        .cloned()
        .collect();
    let keep: Vec<usize> = (0..mats.col_labels.len())
        .filter(|&c| !excluded.contains(&mats.col_labels[c]))
        .collect();
    let mut a = Vec::new();
    let mut r = Vec::new();
    for &c in &keep {
        for row in 0..mats.row_labels.len() {
            a.push(mats.regression[(row, c)]);
            r.push(mats.reference[(row, c)]);
        }
    }
    let diff: f64 = a
        .iter()
        .zip(&r)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = r.iter().map(|y| y * y).sum::<f64>().sqrt();
    let signed: Vec<(f64, f64)> = a
        .iter()
        .zip(&r)
        .filter(|(_, y)| y.abs() > 1e-6)
        .map(|(x, y)| (*x, *y))
        .collect();
    let agree = signed
        .iter()
        .filter(|(x, y)| *x != 0.0 && x.signum() == y.signum())
        .count();
    let total = mats.regression.len();
    let report = SimilarityReport {
        reference,
        engine: lin.engine().as_str().to_string(),
        frobenius_rel_error: if norm > 0.0 { diff / norm } else { diff },
        correlation: pearson(&a, &r),
        sign_agreement: if signed.is_empty() {
            1.0
        } else {
            agree as f64 / signed.len() as f64
        },
        nonzero_fraction: if total == 0 {
            0.0
        } else {
            mats.regression.iter().filter(|v| **v != 0.0).count() as f64 / total as f64
        },
        n_compared: a.len(),
        excluded_columns: excluded,
    };
    Ok((report, mats))
}

/// One grid point of the two-bus angle surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub p: f64,
    pub q: f64,
    /// `None` where the AC power flow has no solution from a flat start.
    pub acpf: Option<f64>,
    pub dlpf: f64,
    pub dcpf: f64,
}

/// θ₂ of a two-bus case over an `n × n` grid of bus-2 injections, by
/// ACPF, DLPF and DCPF. Rows run over `p` first, then `q`.
pub fn two_bus_surface(
    case: &NetworkCase,
    adm: &AdmittanceSet,
    p_range: [f64; 2],
    q_range: [f64; 2],
    n: usize,
) -> Result<Vec<SurfacePoint>> {
    if case.n_buses() != 2 {
        return Err(Error::InvalidInput(format!(
            "the angle surface needs a two-bus case, this one has {} buses",
            case.n_buses()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidInput(
            "the grid needs at least 2 points per axis".into(),
        ));
    }
    let slack = case.slack_index();
    let other = 1 - slack;
    let dlpf = DlpfModel::new(case, adm);
    let nominal = crate::acpf::InjectionSpec::nominal(case);
    let axis = |r: [f64; 2], k: usize| r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (p2, q2) = (axis(p_range, i), axis(q_range, j));
            let mut spec = nominal.clone();
            spec.p = vec![0.0; 2];
            spec.q = vec![0.0; 2];
            spec.p[other] = p2;
            spec.q[other] = q2;
            let acpf =
                crate::acpf::solve_acpf(case, adm, &spec, &crate::acpf::SolveOptions::default())
                    .ok()
                    .map(|s| s.point.theta[other] - s.point.theta[slack]);
            let boundary = DlpfBoundary {
                v: spec.v.clone(),
                theta_slack: 0.0,
            };
            let (th, _) = dlpf.solve(&spec.p, &spec.q, &boundary)?;
            let dc = dcpf_solve(case, adm, &spec.p)?;
            out.push(SurfacePoint {
                p: p2,
                q: q2,
                acpf,
                dlpf: th[other],
                dcpf: dc[other],
            });
        }
    }
    Ok(out)
}

pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut out = String::from("P2,Q2,theta2_ACPF,theta2_DLPF,theta2_DCPF\n");
    for s in points {
        let acpf = s.acpf.map(format_g17).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_g17(s.p),
            format_g17(s.q),
            acpf,
            format_g17(s.dlpf),
            format_g17(s.dcpf)
        );
    }
    out
}
