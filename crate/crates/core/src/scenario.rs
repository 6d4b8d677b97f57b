//! Operating snapshot datasets: Monte Carlo load sampling, correlated load
//! profiles, train/test splitting and CSV storage.
//!
//! Random draws use `ChaCha8Rng` seeded with the run seed; every draw (one
//! candidate snapshot) gets its own stream, so the values behind an accepted
//! snapshot do not depend on how many draws before it failed or on the
//! order in which draws are solved.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acpf::{solve_acpf, AcpfSolution, InjectionSpec, SolveOptions, Start};
use crate::error::{Error, Result};
use crate::network::{AdmittanceSet, BusType, NetworkCase};

/// A closed interval `[lo, hi]`.
pub type Interval = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_samples: usize,
    /// Per-bus multiplier applied to the preset active demand.
    pub p_factor_range: Interval,
    /// Reactive demand as a fraction of the sampled active demand.
    pub q_ratio_range: Interval,
    /// Half-width of the uniform perturbation added to every PV and slack
    /// voltage setpoint (p.u.).
    pub v_setpoint_jitter: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_samples: 400,
            p_factor_range: [0.8, 1.2],
            q_ratio_range: [0.15, 0.25],
            v_setpoint_jitter: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    /// Base active demand per time step (rows) and load bus (columns, in
    /// the order of `load_buses`), p.u.
    pub profiles: Vec<Vec<f64>>,
    /// Std of the multiplicative Gaussian noise, as a fraction of demand.
    pub noise_sigma: f64,
    pub scale: f64,
    pub q_ratio_range: Interval,
    pub v_setpoint_jitter: f64,
    pub seed: u64,
}

/// How a dataset was produced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenMeta {
    /// `mc`, `profiles` or empty when unknown.
    pub mode: String,
    pub load_factors: String,
    pub dispatch: String,
    pub p_factor_range: Option<Interval>,
    pub q_ratio_range: Option<Interval>,
    pub v_setpoint_jitter: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub scale: Option<f64>,
    /// Candidate snapshots drawn, including discarded ones.
    pub draws: usize,
    pub discarded: usize,
    pub acpf_tol: f64,
    pub max_mismatch: f64,
}

/// Snapshot rows `(P, Q, V, θ, PF, QF)` over buses in case order and
/// in-service branches in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub case_ref: String,
    pub vars: Vec<String>,
    /// T × (4N + 2L), one row per snapshot.
    pub data: DMatrix<f64>,
    pub seed: u64,
    pub meta: GenMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    case_ref: String,
    seed: u64,
    meta: GenMeta,
}

/// Column labels of a dataset for `case`.
pub fn dataset_vars(case: &NetworkCase) -> Vec<String> {
    let ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
    let mut vars = Vec::with_capacity(4 * ids.len() + 2 * case.n_flows());
    for prefix in ["P", "Q", "V", "theta"] {
        vars.extend(ids.iter().map(|id| format!("{prefix}_{id}")));
    }
    for prefix in ["PF", "QF"] {
        vars.extend((1..=case.n_flows()).map(|k| format!("{prefix}_{k}")));
    }
    vars
}

/// Buses with a nonzero preset active demand, as positions in case order.
pub fn load_buses(case: &NetworkCase) -> Vec<usize> {
    (0..case.n_buses())
        .filter(|&k| case.buses[k].pd != 0.0)
        .collect()
}

impl SnapshotDataset {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == label)
    }

    /// Selected variables as a variable-major matrix (one row per label,
    /// one column per snapshot).
    pub fn columns(&self, labels: &[String]) -> Result<DMatrix<f64>> {
        let lookup: HashMap<&str, usize> = self
            .vars
            .iter()
            .enumerate()
            .map(|(k, v)| (v.as_str(), k))
            .collect();
        let idx = labels
            .iter()
            .map(|l| {
                lookup
                    .get(l.as_str())
                    .copied()
                    .ok_or_else(|| Error::LabelMismatch(format!("dataset has no variable {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(idx.len(), self.n_rows(), |r, t| {
            self.data[(t, idx[r])]
        }))
    }

    /// One snapshot split back into per-quantity vectors `(P, Q, V, θ, PF, QF)`.
    pub fn row_parts(&self, t: usize, n_bus: usize) -> [Vec<f64>; 6] {
        let row: Vec<f64> = self.data.row(t).iter().copied().collect();
        let l = (row.len() - 4 * n_bus) / 2;
        let cut = |a: usize, len: usize| row[a..a + len].to_vec();
        [
            cut(0, n_bus),
            cut(n_bus, n_bus),
            cut(2 * n_bus, n_bus),
            cut(3 * n_bus, n_bus),
            cut(4 * n_bus, l),
            cut(4 * n_bus + l, l),
        ]
    }

    /// Checks the labels against a case.
    pub fn check_case(&self, case: &NetworkCase) -> Result<()> {
        if self.vars != dataset_vars(case) {
            return Err(Error::LabelMismatch(
                "dataset variables do not match the case buses and branches".into(),
            ));
        }
        Ok(())
    }

    fn subset(&self, rows: &[usize]) -> SnapshotDataset {
        SnapshotDataset {
            case_ref: self.case_ref.clone(),
            vars: self.vars.clone(),
            data: self.data.select_rows(rows),
            seed: self.seed,
            meta: self.meta.clone(),
        }
    }

    /// Writes the CSV and a `<path>.meta.json` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            case_ref: self.case_ref.clone(),
            seed: self.seed,
            meta: self.meta.clone(),
        };
        let meta_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar)? + "\n";
        fs::write(&meta_path, text).map_err(|e| Error::io(meta_path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.vars.join(",");
        out.push('\n');
        for row in self.data.row_iter() {
            let cells: Vec<String> = row.iter().map(|&x| format_g17(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Reads a CSV written by [`SnapshotDataset::save`]. The sidecar is
    /// optional; without it the case reference is empty.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ds = Self::from_csv_str(&text)?;
        let meta_path = sidecar_path(path);
        if meta_path.exists() {
            let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            let sidecar: Sidecar = serde_json::from_str(&meta_text)
                .map_err(|e| Error::Parse(format!("{}: {e}", meta_path.display())))?;
            ds.case_ref = sidecar.case_ref;
            ds.seed = sidecar.seed;
            ds.meta = sidecar.meta;
        }
        Ok(ds)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let vars: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut values = Vec::new();
        let mut n_rows = 0;
        for (t, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != vars.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    t + 1,
                    record.len(),
                    vars.len()
                )));
            }
            for field in record.iter() {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: not a number: {field:?}", t + 1)))?;
                if !x.is_finite() {
                    return Err(Error::Parse(format!("row {}: non-finite value", t + 1)));
                }
                values.push(x);
            }
            n_rows += 1;
        }
        if n_rows == 0 {
            return Err(Error::Parse("dataset has no rows".into()));
        }
        Ok(SnapshotDataset {
            case_ref: String::new(),
            vars: vars.clone(),
            data: DMatrix::from_row_slice(n_rows, vars.len(), &values),
            seed: 0,
            meta: GenMeta::default(),
        })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Formats like C's `%.17g`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn check_interval(name: &str, iv: Interval, positive: bool) -> Result<()> {
    let ok = iv[0].is_finite() && iv[1].is_finite() && iv[0] <= iv[1] && (!positive || iv[0] > 0.0);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} [{}, {}] is not a valid interval",
            iv[0], iv[1]
        )))
    }
}

fn draw_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sampled demand for one candidate snapshot.
struct Draw {
    pd: Vec<f64>,
    qd: Vec<f64>,
    vset: Vec<f64>,
}

struct Solver<'a> {
    case: &'a NetworkCase,
    adm: &'a AdmittanceSet,
    types: Vec<BusType>,
    pd0_total: f64,
    pg0: Vec<f64>,
    qg0: Vec<f64>,
    warm: Start,
    opts: SolveOptions,
}

impl<'a> Solver<'a> {
    fn new(case: &'a NetworkCase, adm: &'a AdmittanceSet) -> Result<Self> {
        let opts = SolveOptions::default();
        let nominal = solve_acpf(case, adm, &InjectionSpec::nominal(case), &opts)?;
        let (pg0, qg0) = case.generation();
        Ok(Solver {
            case,
            adm,
            types: case.bus_types(),
            pd0_total: case.buses.iter().map(|b| b.pd).sum(),
            pg0,
            qg0,
            warm: Start::Warm(nominal.point),
            opts,
        })
    }

    fn jittered_setpoints(&self, rng: &mut ChaCha8Rng, jitter: f64) -> Vec<f64> {
        self.case
            .buses
            .iter()
            .zip(&self.types)
            .map(|(bus, t)| {
                let v0 = bus.vset.unwrap_or(1.0);
                if *t != BusType::PQ && jitter > 0.0 {
                    v0 + rng.gen_range(-jitter..=jitter)
                } else {
                    v0
                }
            })
            .collect()
    }

    /// Generators scaled by a common factor to meet the sampled demand.
    fn solve(&self, draw: &Draw) -> Result<AcpfSolution> {
        let total: f64 = draw.pd.iter().sum();
        let k = if self.pd0_total != 0.0 {
            total / self.pd0_total
        } else {
            1.0
        };
        let n = self.case.n_buses();
        let spec = InjectionSpec {
            p: (0..n).map(|i| k * self.pg0[i] - draw.pd[i]).collect(),
            q: (0..n).map(|i| self.qg0[i] - draw.qd[i]).collect(),
            v: draw.vset.clone(),
            theta_slack: 0.0,
        };
        let opts = SolveOptions {
            start: self.warm.clone(),
            ..self.opts.clone()
        };
        solve_acpf(self.case, self.adm, &spec, &opts)
    }
}

/// Solves candidate draws until `n` are accepted, in draw-index order.
/// Fails once more than a fifth of the draws have been discarded.
fn collect_snapshots(
    n: usize,
    candidate: impl Fn(usize) -> Result<AcpfSolution> + Sync,
) -> Result<(Vec<AcpfSolution>, usize, usize)> {
    let max_discard = n / 4;
    let mut accepted = Vec::with_capacity(n);
    let mut next = 0usize;
    let mut discarded = 0usize;
    while accepted.len() < n {
        let batch: Vec<usize> = (next..next + (n - accepted.len())).collect();
        next += batch.len();
        let results: Vec<Result<AcpfSolution>> = batch.par_iter().map(|&i| candidate(i)).collect();
        for (i, res) in batch.into_iter().zip(results) {
            match res {
                Ok(sol) => accepted.push(sol),
                Err(e) if e.is_numerical() => {
                    discarded += 1;
                    if discarded > max_discard {
                        return Err(Error::Generation {
                            failed: discarded,
                            draws: i + 1,
                            last_index: i,
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((accepted, next, discarded))
}

fn assemble(case: &NetworkCase, sols: &[AcpfSolution]) -> DMatrix<f64> {
    let n = case.n_buses();
    let l = case.n_flows();
    let width = 4 * n + 2 * l;
    let mut data = DMatrix::zeros(sols.len(), width);
    for (t, sol) in sols.iter().enumerate() {
        let pt = &sol.point;
        let row =
            pt.p.iter()
                .chain(&pt.q)
                .chain(&pt.v)
                .chain(&pt.theta)
                .chain(&pt.pf)
                .chain(&pt.qf);
        for (c, &x) in row.enumerate() {
            data[(t, c)] = x;
        }
    }
    data
}

/// Independent Monte Carlo snapshots around the preset loading.
pub fn generate_mc(
    case: &NetworkCase,
    adm: &AdmittanceSet,
    cfg: &McConfig,
) -> Result<SnapshotDataset> {
    if cfg.n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be at least 1".into()));
    }
    check_interval("p_factor_range", cfg.p_factor_range, true)?;
    check_interval("q_ratio_range", cfg.q_ratio_range, false)?;
    if !(cfg.v_setpoint_jitter >= 0.0) {
        return Err(Error::InvalidInput(
            "v_setpoint_jitter must be non-negative".into(),
        ));
    }
    let solver = Solver::new(case, adm)?;
    let [plo, phi] = cfg.p_factor_range;
    let [qlo, qhi] = cfg.q_ratio_range;
    let candidate = |i: usize| {
        let mut rng = draw_rng(cfg.seed, i as u64);
        let mut pd = Vec::with_capacity(case.n_buses());
        let mut qd = Vec::with_capacity(case.n_buses());
        for bus in &case.buses {
            let p = bus.pd * rng.gen_range(plo..=phi);
            pd.push(p);
            qd.push(p * rng.gen_range(qlo..=qhi));
        }
        let vset = solver.jittered_setpoints(&mut rng, cfg.v_setpoint_jitter);
        solver.solve(&Draw { pd, qd, vset })
    };
    let (sols, draws, discarded) = collect_snapshots(cfg.n_samples, candidate)?;
    Ok(SnapshotDataset {
        case_ref: String::new(),
        vars: dataset_vars(case),
        data: assemble(case, &sols),
        seed: cfg.seed,
        meta: GenMeta {
            mode: "mc".into(),
            load_factors: "independent per bus".into(),
            dispatch: "proportional".into(),
            p_factor_range: Some(cfg.p_factor_range),
            q_ratio_range: Some(cfg.q_ratio_range),
            v_setpoint_jitter: Some(cfg.v_setpoint_jitter),
            noise_sigma: None,
            scale: None,
            draws,
            discarded,
            acpf_tol: solver.opts.tol,
            max_mismatch: sols.iter().map(|s| s.mismatch).fold(0.0, f64::max),
        },
    })
}

/// Snapshots following the rows of a load profile matrix, with
/// multiplicative Gaussian noise. A row whose power flow fails is redrawn
/// with fresh noise.
pub fn generate_profiles(
    case: &NetworkCase,
    adm: &AdmittanceSet,
    cfg: &ProfileConfig,
) -> Result<SnapshotDataset> {
    let loads = load_buses(case);
    let t_rows = cfg.profiles.len();
    if t_rows == 0 {
        return Err(Error::InvalidInput("profile matrix has no rows".into()));
    }
    if let Some(bad) = cfg.profiles.iter().position(|r| r.len() != loads.len()) {
        return Err(Error::InvalidInput(format!(
            "profile row {} has {} columns, case has {} load buses",
            bad + 1,
            cfg.profiles[bad].len(),
            loads.len()
        )));
    }
    if !(cfg.noise_sigma >= 0.0) || !(cfg.scale > 0.0) || !(cfg.v_setpoint_jitter >= 0.0) {
        return Err(Error::InvalidInput(
            "noise_sigma and v_setpoint_jitter must be ≥ 0 and scale > 0".into(),
        ));
    }
    check_interval("q_ratio_range", cfg.q_ratio_range, false)?;
    let solver = Solver::new(case, adm)?;
    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let [qlo, qhi] = cfg.q_ratio_range;

    let attempt = |t: usize, a: usize| {
        let mut rng = draw_rng(cfg.seed, ((a as u64) << 32) | t as u64);
        let mut pd = vec![0.0; case.n_buses()];
        let mut qd = vec![0.0; case.n_buses()];
        for (j, &bus) in loads.iter().enumerate() {
            let eps: f64 = noise.sample(&mut rng);
            pd[bus] = cfg.scale * cfg.profiles[t][j] * (1.0 + eps);
            qd[bus] = pd[bus] * rng.gen_range(qlo..=qhi);
        }
        let vset = solver.jittered_setpoints(&mut rng, cfg.v_setpoint_jitter);
        solver.solve(&Draw { pd, qd, vset })
    };

    let max_discard = t_rows / 4;
    let first: Vec<Result<AcpfSolution>> =
        (0..t_rows).into_par_iter().map(|t| attempt(t, 0)).collect();
    let mut sols = Vec::with_capacity(t_rows);
    let mut discarded = 0;
    for (t, res) in first.into_iter().enumerate() {
        let mut res = res;
        let mut a = 0;
        loop {
            match res {
                Ok(sol) => {
                    sols.push(sol);
                    break;
                }
                Err(e) if e.is_numerical() => {
                    discarded += 1;
                    if discarded > max_discard {
                        return Err(Error::Generation {
                            failed: discarded,
                            draws: t + 1 + discarded,
                            last_index: t,
                        });
                    }
                    a += 1;
                    res = attempt(t, a);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(SnapshotDataset {
        case_ref: String::new(),
        vars: dataset_vars(case),
        data: assemble(case, &sols),
        seed: cfg.seed,
        meta: GenMeta {
            mode: "profiles".into(),
            load_factors: "profile rows with multiplicative noise".into(),
            dispatch: "proportional".into(),
            p_factor_range: None,
            q_ratio_range: Some(cfg.q_ratio_range),
            v_setpoint_jitter: Some(cfg.v_setpoint_jitter),
            noise_sigma: Some(cfg.noise_sigma),
            scale: Some(cfg.scale),
            draws: t_rows + discarded,
            discarded,
            acpf_tol: solver.opts.tol,
            max_mismatch: sols.iter().map(|s| s.mismatch).fold(0.0, f64::max),
        },
    })
}

/// Load profiles that rise and fall together: a daily curve shared by all
/// buses times each bus's preset demand, with a random level per day.
///
/// Row `t` is hour `t mod 24`; the curve peaks in the evening.
pub fn daily_profiles(
    case: &NetworkCase,
    n_rows: usize,
    amplitude: f64,
    seed: u64,
) -> Vec<Vec<f64>> {
    let loads = load_buses(case);
    let mut rng = draw_rng(seed, u64::MAX);
    let n_days = n_rows.div_ceil(24);
    let day_level: Vec<f64> = (0..n_days).map(|_| rng.gen_range(0.95..=1.05)).collect();
    (0..n_rows)
        .map(|t| {
            let hour = (t % 24) as f64;
            let shape = 1.0 + amplitude * (std::f64::consts::TAU * (hour - 12.0) / 24.0).sin();
            let level = day_level[t / 24] * shape;
            loads.iter().map(|&k| case.buses[k].pd * level).collect()
        })
        .collect()
}

/// Reads a profile CSV whose header holds the load bus ids (optionally as
/// `P_<id>`), reordering the columns to the case's load-bus order.
pub fn read_profiles(path: impl AsRef<Path>, case: &NetworkCase) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text, case)
}

pub fn parse_profiles(text: &str, case: &NetworkCase) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let ids = reader
        .headers()?
        .iter()
        .map(|h| {
            let h = h.trim();
            h.strip_prefix("P_")
                .unwrap_or(h)
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("profile header {h:?} is not a bus id")))
        })
        .collect::<Result<Vec<_>>>()?;
    let loads = load_buses(case);
    let mut col_of = Vec::with_capacity(loads.len());
    for &k in &loads {
        let id = case.buses[k].id;
        col_of.push(ids.iter().position(|&c| c == id).ok_or_else(|| {
            Error::InvalidInput(format!("profile has no column for load bus {id}"))
        })?);
    }
    if ids.len() != loads.len() {
        return Err(Error::InvalidInput(format!(
            "profile has {} columns, case has {} load buses",
            ids.len(),
            loads.len()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let vals = record
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != ids.len() {
            return Err(Error::Parse("ragged profile row".into()));
        }
        rows.push(col_of.iter().map(|&c| vals[c]).collect());
    }
    Ok(rows)
}

pub fn profiles_to_csv(case: &NetworkCase, profiles: &[Vec<f64>]) -> String {
    let header: Vec<String> = load_buses(case)
        .iter()
        .map(|&k| case.buses[k].id.to_string())
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in profiles {
        let cells: Vec<String> = row.iter().map(|&x| format_g17(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Disjoint train and test subsets chosen by a seeded shuffle. Each subset
/// keeps the original row order.
pub fn split(
    ds: &SnapshotDataset,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(SnapshotDataset, SnapshotDataset)> {
    let t = ds.n_rows();
    if n_train + n_test > t {
        return Err(Error::InvalidInput(format!(
            "cannot split {t} rows into {n_train} training and {n_test} test rows"
        )));
    }
    let mut idx: Vec<usize> = (0..t).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..n_train + n_test].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}
