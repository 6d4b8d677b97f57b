//! Power flow mappings learned from snapshots.
//!
//! * forward: `(θ, V) → (P, Q)`;
//! * inverse: `(P_L, P_S, Q_L, Q_S, Q_R) → (θ_L, θ_S, P_R, V_L, V_S, V_R)`,
//!   re-sliced by bus type so the usual power flow unknowns can be solved
//!   from the usual knowns;
//! * branch: `(P without P_R, Q) → (PF, QF)`.
//!
//! Subscripts: `L` PQ buses, `S` PV buses, `R` the slack bus. Inside each
//! group buses keep their case-file order.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusOrdering, BusType, NetworkCase};
use crate::regression::{fit, predict, DesignMatrices, EngineConfig, LinearModel, ModelExport};
use crate::scenario::SnapshotDataset;

/// Default limit on the condition number of `Ã₂₂`.
pub const DEFAULT_COND_THRESHOLD: f64 = 1e12;

fn bus_labels(prefix: &str, ids: &[usize], positions: &[usize]) -> Vec<String> {
    positions
        .iter()
        .map(|&k| format!("{prefix}_{}", ids[k]))
        .collect()
}

fn bus_ids(case: &NetworkCase) -> Vec<usize> {
    case.buses.iter().map(|b| b.id).collect()
}

fn design(
    train: &SnapshotDataset,
    x_labels: Vec<String>,
    y_labels: Vec<String>,
) -> Result<DesignMatrices> {
    let x = train.columns(&x_labels)?;
    let y = train.columns(&y_labels)?;
    DesignMatrices::new(x, y, x_labels, y_labels)
}

/// Predictions for every snapshot of `ds`, one column per snapshot, rows
/// in the model's output order.
pub fn predict_dataset(model: &LinearModel, ds: &SnapshotDataset) -> Result<DMatrix<f64>> {
    let x = ds.columns(&model.x_labels)?;
    predict(model, &model.x_labels, &x)
}

/// `(θ, V) → (P, Q)` with rows and columns in block order.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardModel {
    pub model: LinearModel,
    pub ordering: BusOrdering,
    pub bus_ids: Vec<usize>,
}

impl ForwardModel {
    pub fn labels(case: &NetworkCase, ordering: &BusOrdering) -> (Vec<String>, Vec<String>) {
        let ids = bus_ids(case);
        let x = [
            bus_labels("theta", &ids, &ordering.perm),
            bus_labels("V", &ids, &ordering.perm),
        ]
        .concat();
        let y = [
            bus_labels("P", &ids, &ordering.perm),
            bus_labels("Q", &ids, &ordering.perm),
        ]
        .concat();
        (x, y)
    }

    fn n(&self) -> usize {
        self.ordering.len()
    }

    /// `∂P/∂θ` block.
    pub fn h(&self) -> DMatrix<f64> {
        self.model.a.view((0, 0), (self.n(), self.n())).into_owned()
    }

    /// `∂P/∂V` block.
    pub fn n_block(&self) -> DMatrix<f64> {
        self.model
            .a
            .view((0, self.n()), (self.n(), self.n()))
            .into_owned()
    }

    /// `∂Q/∂θ` block.
    pub fn m(&self) -> DMatrix<f64> {
        self.model
            .a
            .view((self.n(), 0), (self.n(), self.n()))
            .into_owned()
    }

    /// `∂Q/∂V` block.
    pub fn l(&self) -> DMatrix<f64> {
        self.model
            .a
            .view((self.n(), self.n()), (self.n(), self.n()))
            .into_owned()
    }

    pub fn c_p(&self) -> DVector<f64> {
        self.model.c.rows(0, self.n()).into_owned()
    }

    pub fn c_q(&self) -> DVector<f64> {
        self.model.c.rows(self.n(), self.n()).into_owned()
    }

    /// `(P, Q)` from `(θ, V)`, all vectors in case order.
    pub fn predict(&self, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n();
        if theta.len() != n || v.len() != n {
            return Err(Error::InvalidInput(format!(
                "expected {n} angles and magnitudes"
            )));
        }
        let x: Vec<f64> = self
            .ordering
            .apply(theta)
            .into_iter()
            .chain(self.ordering.apply(v))
            .collect();
        let y = self.model.eval(&x);
        Ok((
            self.ordering.unapply(&y[..n]),
            self.ordering.unapply(&y[n..]),
        ))
    }
}

pub fn fit_forward(
    train: &SnapshotDataset,
    case: &NetworkCase,
    engine: &EngineConfig,
) -> Result<ForwardModel> {
    let ordering = crate::network::bus_ordering(case);
    let (x, y) = ForwardModel::labels(case, &ordering);
    let model = fit(&design(train, x, y)?, engine)?;
    Ok(ForwardModel {
        model,
        ordering,
        bus_ids: bus_ids(case),
    })
}

/// Inverse map with the fixed 6×5 block layout.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    pub model: LinearModel,
    pub ordering: BusOrdering,
    pub bus_ids: Vec<usize>,
    /// Bus types at fit time, case order.
    pub bus_types: Vec<BusType>,
}

impl InverseModel {
    pub fn labels(case: &NetworkCase, ordering: &BusOrdering) -> (Vec<String>, Vec<String>) {
        let ids = bus_ids(case);
        let (l, s, r) = (ordering.pq(), ordering.pv(), [ordering.slack()]);
        let x = [
            bus_labels("P", &ids, l),
            bus_labels("P", &ids, s),
            bus_labels("Q", &ids, l),
            bus_labels("Q", &ids, s),
            bus_labels("Q", &ids, &r),
        ]
        .concat();
        let y = [
            bus_labels("theta", &ids, l),
            bus_labels("theta", &ids, s),
            bus_labels("P", &ids, &r),
            bus_labels("V", &ids, l),
            bus_labels("V", &ids, s),
            bus_labels("V", &ids, &r),
        ]
        .concat();
        (x, y)
    }

    fn row_sizes(&self) -> [usize; 6] {
        let (l, s, _) = self.ordering.block_sizes();
        [l, s, 1, l, s, 1]
    }

    fn col_sizes(&self) -> [usize; 5] {
        let (l, s, _) = self.ordering.block_sizes();
        [l, s, l, s, 1]
    }

    /// Block `A_ij`, one-based as in the 6×5 layout.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let rows = self.row_sizes();
        let cols = self.col_sizes();
        let r0: usize = rows[..i - 1].iter().sum();
        let c0: usize = cols[..j - 1].iter().sum();
        self.model
            .a
            .view((r0, c0), (rows[i - 1], cols[j - 1]))
            .into_owned()
    }

    /// Constant `C_i`, one-based.
    pub fn constant(&self, i: usize) -> DVector<f64> {
        let rows = self.row_sizes();
        let r0: usize = rows[..i - 1].iter().sum();
        self.model.c.rows(r0, rows[i - 1]).into_owned()
    }

    /// The upper-left `[A_11 A_12; A_21 A_22]`: angles of non-slack buses
    /// against their active injections.
    pub fn angle_block(&self) -> DMatrix<f64> {
        let k = self.ordering.non_slack().len();
        self.model.a.view((0, 0), (k, k)).into_owned()
    }
}

pub fn fit_inverse(
    train: &SnapshotDataset,
    case: &NetworkCase,
    engine: &EngineConfig,
) -> Result<InverseModel> {
    let ordering = crate::network::bus_ordering(case);
    let ids = bus_ids(case);
    for v_label in bus_labels("V", &ids, ordering.regulated()) {
        let col = train.columns(std::slice::from_ref(&v_label))?;
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64;
        if var < 1e-14 {
            return Err(Error::DegenerateData(format!(
                "{v_label} is constant in the training data (variance {var:.1e}); voltage magnitudes at PV and \
                 slack buses must vary for the inverse map to be identifiable"
            )));
        }
    }
    let (x, y) = InverseModel::labels(case, &ordering);
    let model = fit(&design(train, x, y)?, engine)?;
    Ok(InverseModel {
        model,
        ordering,
        bus_ids: ids,
        bus_types: case.bus_types(),
    })
}

/// The inverse map re-sliced into known and unknown parts:
/// `y₁ = Ã₁₁ x₁ + Ã₁₂ x₂ + C̃₁`, `y₂ = Ã₂₁ x₁ + Ã₂₂ x₂ + C̃₂` with
/// `x₁ = (P_L, P_S, Q_L)`, `x₂ = (Q_S, Q_R)`, `y₁ = (θ_L, θ_S, P_R, V_L)`
/// and `y₂ = (V_S, V_R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedInverse {
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub c1: DVector<f64>,
    pub c2: DVector<f64>,
    pub x1_labels: Vec<String>,
    pub x2_labels: Vec<String>,
    pub y1_labels: Vec<String>,
    pub y2_labels: Vec<String>,
    pub cond_a22: f64,
    pub cond_threshold: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    let (max, min) = (s.max(), s.min());
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Re-slices `m` under its own bus types.
pub fn partition_inverse(m: &InverseModel) -> Result<PartitionedInverse> {
    repartition(m, &m.bus_types)
}

/// Re-slices the fitted map for a new bus-type assignment (case order)
/// without refitting. The slack bus must not move.
pub fn repartition(m: &InverseModel, new_types: &[BusType]) -> Result<PartitionedInverse> {
    if new_types.len() != m.bus_ids.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} bus types, got {}",
            m.bus_ids.len(),
            new_types.len()
        )));
    }
    let ord = BusOrdering::from_types(new_types);
    let (_, _, n_slack) = ord.block_sizes();
    if n_slack != 1 || ord.slack() != m.ordering.slack() {
        return Err(Error::InvalidInput(
            "the slack bus cannot change when repartitioning".into(),
        ));
    }
    let ids = &m.bus_ids;
    let (l, s, r) = (ord.pq(), ord.pv(), [ord.slack()]);
    let x1 = [
        bus_labels("P", ids, l),
        bus_labels("P", ids, s),
        bus_labels("Q", ids, l),
    ]
    .concat();
    let x2 = [bus_labels("Q", ids, s), bus_labels("Q", ids, &r)].concat();
    let y1 = [
        bus_labels("theta", ids, l),
        bus_labels("theta", ids, s),
        bus_labels("P", ids, &r),
        bus_labels("V", ids, l),
    ]
    .concat();
    let y2 = [bus_labels("V", ids, s), bus_labels("V", ids, &r)].concat();

    let find = |labels: &[String], wanted: &[String]| -> Result<Vec<usize>> {
        wanted
            .iter()
            .map(|w| {
                labels.iter().position(|l| l == w).ok_or_else(|| {
                    Error::LabelMismatch(format!("inverse model has no variable {w}"))
                })
            })
            .collect()
    };
    let xi1 = find(&m.model.x_labels, &x1)?;
    let xi2 = find(&m.model.x_labels, &x2)?;
    let yi1 = find(&m.model.y_labels, &y1)?;
    let yi2 = find(&m.model.y_labels, &y2)?;
    let a = &m.model.a;
    let pick = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
    };
    let a22 = pick(&yi2, &xi2);
    let cond_a22 = condition_number(&a22);
    Ok(PartitionedInverse {
        a11: pick(&yi1, &xi1),
        a12: pick(&yi1, &xi2),
        a21: pick(&yi2, &xi1),
        a22,
        c1: DVector::from_iterator(yi1.len(), yi1.iter().map(|&i| m.model.c[i])),
        c2: DVector::from_iterator(yi2.len(), yi2.iter().map(|&i| m.model.c[i])),
        x1_labels: x1,
        x2_labels: x2,
        y1_labels: y1,
        y2_labels: y2,
        cond_a22,
        cond_threshold: DEFAULT_COND_THRESHOLD,
    })
}

impl PartitionedInverse {
    /// Solves for `(y₁, x₂)` given `x₁` and `y₂`.
    pub fn solve(
        &self,
        x1: &DVector<f64>,
        y2: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        if x1.len() != self.x1_labels.len() || y2.len() != self.y2_labels.len() {
            return Err(Error::InvalidInput(
                "known vectors have the wrong length".into(),
            ));
        }
        if !(self.cond_a22 < self.cond_threshold) {
            return Err(Error::IllConditioned {
                cond: self.cond_a22,
                threshold: self.cond_threshold,
            });
        }
        let rhs = y2 - &self.a21 * x1 - &self.c2;
        let x2 = self
            .a22
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("Ã₂₂ is singular".into()))?;
        let y1 = &self.a11 * x1 + &self.a12 * &x2 + &self.c1;
        Ok((y1, x2))
    }

    /// `‖Ã₂₁ x₁ + Ã₂₂ x₂ + C̃₂ − y₂‖∞`.
    pub fn residual(&self, x1: &DVector<f64>, x2: &DVector<f64>, y2: &DVector<f64>) -> f64 {
        (&self.a21 * x1 + &self.a22 * x2 + &self.c2 - y2).amax()
    }

    /// Solves every snapshot of `ds`, returning `(y₁, x₂)` with one column
    /// per snapshot.
    pub fn solve_dataset(&self, ds: &SnapshotDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let x1 = ds.columns(&self.x1_labels)?;
        let y2 = ds.columns(&self.y2_labels)?;
        let t = ds.n_rows();
        let mut y1_out = DMatrix::zeros(self.y1_labels.len(), t);
        let mut x2_out = DMatrix::zeros(self.x2_labels.len(), t);
        for k in 0..t {
            let (y1, x2) = self.solve(&x1.column(k).into_owned(), &y2.column(k).into_owned())?;
            y1_out.set_column(k, &y1);
            x2_out.set_column(k, &x2);
        }
        Ok((y1_out, x2_out))
    }
}

/// Inputs of a branch-flow model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchInput {
    /// `(P without P_R, Q)`.
    #[default]
    Injections,
    /// `(θ, V)`.
    Voltages,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchModel {
    pub model: LinearModel,
    pub ordering: BusOrdering,
    pub bus_ids: Vec<usize>,
    pub input: BranchInput,
}

impl BranchModel {
    pub fn labels(
        case: &NetworkCase,
        ordering: &BusOrdering,
        input: BranchInput,
    ) -> (Vec<String>, Vec<String>) {
        let ids = bus_ids(case);
        let x = match input {
            BranchInput::Injections => [
                bus_labels("P", &ids, ordering.non_slack()),
                bus_labels("Q", &ids, &ordering.perm),
            ]
            .concat(),
            BranchInput::Voltages => [
                bus_labels("theta", &ids, &ordering.perm),
                bus_labels("V", &ids, &ordering.perm),
            ]
            .concat(),
        };
        let l = case.n_flows();
        let y = (1..=l)
            .map(|k| format!("PF_{k}"))
            .chain((1..=l).map(|k| format!("QF_{k}")))
            .collect();
        (x, y)
    }

    pub fn n_flows(&self) -> usize {
        self.model.y_labels.len() / 2
    }
}

pub fn fit_branch(
    train: &SnapshotDataset,
    case: &NetworkCase,
    engine: &EngineConfig,
    input: BranchInput,
) -> Result<BranchModel> {
    let ordering = crate::network::bus_ordering(case);
    let (x, y) = BranchModel::labels(case, &ordering, input);
    let model = fit(&design(train, x, y)?, engine)?;
    Ok(BranchModel {
        model,
        ordering,
        bus_ids: bus_ids(case),
        input,
    })
}

/// Any of the three mappings.
#[derive(Debug, Clone, PartialEq)]
pub enum MappingModel {
    Forward(ForwardModel),
    Inverse(InverseModel),
    Branch(BranchModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forward,
    Inverse,
    Branch,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(ModelKind::Forward),
            "inverse" => Ok(ModelKind::Inverse),
            "branch" => Ok(ModelKind::Branch),
            other => Err(Error::InvalidInput(format!(
                "unknown model kind {other:?} (expected forward, inverse or branch)"
            ))),
        }
    }
}

/// JSON form of a mapping: the regression export plus the mapping's
/// kind and bus layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingExport {
    pub model_kind: ModelKind,
    pub bus_ordering: BusOrdering,
    pub bus_ids: Vec<usize>,
    pub bus_types: Vec<BusType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch_input: Option<BranchInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond_a22: Option<f64>,
    #[serde(flatten)]
    pub model: ModelExport,
}

impl MappingModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            MappingModel::Forward(_) => ModelKind::Forward,
            MappingModel::Inverse(_) => ModelKind::Inverse,
            MappingModel::Branch(_) => ModelKind::Branch,
        }
    }

    pub fn linear(&self) -> &LinearModel {
        match self {
            MappingModel::Forward(m) => &m.model,
            MappingModel::Inverse(m) => &m.model,
            MappingModel::Branch(m) => &m.model,
        }
    }

    pub fn to_export(&self) -> MappingExport {
        let (ordering, ids) = match self {
            MappingModel::Forward(m) => (&m.ordering, &m.bus_ids),
            MappingModel::Inverse(m) => (&m.ordering, &m.bus_ids),
            MappingModel::Branch(m) => (&m.ordering, &m.bus_ids),
        };
        let mut types = vec![BusType::PQ; ids.len()];
        for &k in ordering.pv() {
            types[k] = BusType::PV;
        }
        types[ordering.slack()] = BusType::Slack;
        MappingExport {
            model_kind: self.kind(),
            bus_ordering: ordering.clone(),
            bus_ids: ids.clone(),
            bus_types: types,
            branch_input: match self {
                MappingModel::Branch(m) => Some(m.input),
                _ => None,
            },
            cond_a22: match self {
                MappingModel::Inverse(m) => partition_inverse(m).ok().map(|p| p.cond_a22),
                _ => None,
            },
            model: self.linear().to_export(),
        }
    }

    pub fn from_export(ex: MappingExport) -> Result<Self> {
        let model = LinearModel::from_export(ex.model)?;
        let ordering = ex.bus_ordering;
        if ordering.len() != ex.bus_ids.len() || ex.bus_types.len() != ex.bus_ids.len() {
            return Err(Error::Parse("bus ordering does not match bus ids".into()));
        }
        Ok(match ex.model_kind {
            ModelKind::Forward => MappingModel::Forward(ForwardModel {
                model,
                ordering,
                bus_ids: ex.bus_ids,
            }),
            ModelKind::Inverse => MappingModel::Inverse(InverseModel {
                model,
                ordering,
                bus_ids: ex.bus_ids,
                bus_types: ex.bus_types,
            }),
            ModelKind::Branch => MappingModel::Branch(BranchModel {
                model,
                ordering,
                bus_ids: ex.bus_ids,
                input: ex.branch_input.unwrap_or_default(),
            }),
        })
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.to_export())?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let ex: MappingExport =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_export(ex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::regression::{Engine, OlsConfig};
    use crate::scenario::{dataset_vars, GenMeta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ols() -> EngineConfig {
        EngineConfig::Ols(OlsConfig::default())
    }

    /// A dataset whose `y_labels` are an exact affine function of random
    /// `x_labels`; every other column is random.
    fn affine_dataset(
        case: &NetworkCase,
        x_labels: &[String],
        y_labels: &[String],
        t: usize,
        seed: u64,
    ) -> (SnapshotDataset, DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars = dataset_vars(case);
        let mut data = DMatrix::from_fn(t, vars.len(), |_, _| rng.gen_range(-1.0..1.0));
        let a0 = DMatrix::from_fn(y_labels.len(), x_labels.len(), |_, _| {
            rng.gen_range(-2.0..2.0)
        });
        let c0 = DVector::from_fn(y_labels.len(), |_, _| rng.gen_range(-1.0..1.0));
        let col = |l: &String| vars.iter().position(|v| v == l).unwrap();
        let xi: Vec<usize> = x_labels.iter().map(col).collect();
        let yi: Vec<usize> = y_labels.iter().map(col).collect();
        for r in 0..t {
            let x = DVector::from_iterator(xi.len(), xi.iter().map(|&c| data[(r, c)]));
            let y = &a0 * x + &c0;
            for (k, &c) in yi.iter().enumerate() {
                data[(r, c)] = y[k];
            }
        }
        let ds = SnapshotDataset {
            case_ref: "synthetic".into(),
            vars,
            data,
            seed,
            meta: GenMeta::default(),
        };
        (ds, a0, c0)
    }

    #[test]
    fn forward_recovers_affine_map() {
        let case = cases::load("ieee5").unwrap();
        let ord = crate::network::bus_ordering(&case);
        let (x, y) = ForwardModel::labels(&case, &ord);
        let (ds, a0, c0) = affine_dataset(&case, &x, &y, 40, 1);
        let m = fit_forward(&ds, &case, &ols()).unwrap();
        assert!((&m.model.a - &a0).amax() < 1e-8);
        assert!((&m.model.c - &c0).amax() < 1e-8);
        let n = 5;
        assert!((m.h() - a0.view((0, 0), (n, n))).amax() < 1e-8);
        assert!((m.l() - a0.view((n, n), (n, n))).amax() < 1e-8);
        // block predictions agree with the raw affine map
        let theta = [0.1, -0.2, 0.05, 0.0, 0.3];
        let v = [1.0, 0.98, 1.02, 1.01, 0.99];
        let (p, q) = m.predict(&theta, &v).unwrap();
        let xb: Vec<f64> = ord.apply(&theta).into_iter().chain(ord.apply(&v)).collect();
        let yb = &a0 * DVector::from_vec(xb) + &c0;
        let pb = ord.apply(&p);
        let qb = ord.apply(&q);
        for k in 0..n {
            assert!((pb[k] - yb[k]).abs() < 1e-8);
            assert!((qb[k] - yb[n + k]).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_recovers_affine_map() {
        let case = cases::load("ieee5").unwrap();
        let ord = crate::network::bus_ordering(&case);
        let (x, y) = InverseModel::labels(&case, &ord);
        assert!(!x.iter().any(|l| l == "P_4"));
        let (ds, a0, c0) = affine_dataset(&case, &x, &y, 40, 2);
        let m = fit_inverse(&ds, &case, &ols()).unwrap();
        assert!((&m.model.a - &a0).amax() < 1e-8);
        assert!((&m.model.c - &c0).amax() < 1e-8);
        // ieee5: PQ = {2, 3}, PV = {1, 5, ...}; check block shapes
        let (l, s, _) = ord.block_sizes();
        assert_eq!(m.block(1, 1).shape(), (l, l));
        assert_eq!(m.block(6, 5).shape(), (1, 1));
        assert_eq!(m.block(3, 2).shape(), (1, s));
    }

    #[test]
    fn branch_recovers_affine_map() {
        let case = cases::load("ieee5").unwrap();
        let ord = crate::network::bus_ordering(&case);
        let (x, y) = BranchModel::labels(&case, &ord, BranchInput::Injections);
        let slack_p = format!("P_{}", case.buses[case.slack_index()].id);
        assert!(!x.contains(&slack_p));
        let (ds, a0, c0) = affine_dataset(&case, &x, &y, 40, 3);
        let m = fit_branch(&ds, &case, &ols(), BranchInput::Injections).unwrap();
        assert!((&m.model.a - &a0).amax() < 1e-8);
        assert!((&m.model.c - &c0).amax() < 1e-8);
    }

    fn fitted_inverse(seed: u64) -> (NetworkCase, InverseModel, SnapshotDataset) {
        let case = cases::load("ieee5").unwrap();
        let ord = crate::network::bus_ordering(&case);
        let (x, y) = InverseModel::labels(&case, &ord);
        let (ds, _, _) = affine_dataset(&case, &x, &y, 40, seed);
        let m = fit_inverse(&ds, &case, &ols()).unwrap();
        (case, m, ds)
    }

    #[test]
    fn solve_is_self_consistent() {
        let (_, m, ds) = fitted_inverse(4);
        let part = partition_inverse(&m).unwrap();
        let (l, s, _) = m.ordering.block_sizes();
        assert_eq!(part.a22.shape(), (s + 1, s + 1));
        assert!(part.cond_a22 < 1e12);
        let x1 = ds.columns(&part.x1_labels).unwrap();
        let y2 = ds.columns(&part.y2_labels).unwrap();
        let x2_true = ds.columns(&part.x2_labels).unwrap();
        let y1_true = ds.columns(&part.y1_labels).unwrap();
        for k in 0..ds.n_rows() {
            let (x1k, y2k) = (x1.column(k).into_owned(), y2.column(k).into_owned());
            let (y1, x2) = part.solve(&x1k, &y2k).unwrap();
            assert!(part.residual(&x1k, &x2, &y2k) < 1e-10);
            // exact-linear data: the solve recovers the hidden quantities
            assert!((x2 - x2_true.column(k)).amax() < 1e-8);
            assert!((y1 - y1_true.column(k)).amax() < 1e-8);
        }
        assert_eq!(part.y1_labels.len(), 2 * l + s + 1);
    }

    #[test]
    fn identity_repartition_is_bitwise_equal() {
        let (case, m, _) = fitted_inverse(5);
        let a = partition_inverse(&m).unwrap();
        let b = repartition(&m, &case.bus_types()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn flipped_pv_bus_matches_affine_oracle() {
        let (case, m, ds) = fitted_inverse(6);
        let mut types = case.bus_types();
        let pv = types.iter().position(|t| *t == BusType::PV).unwrap();
        types[pv] = BusType::PQ;
        let part = repartition(&m, &types).unwrap();
        let (_, s_new, _) = BusOrdering::from_types(&types).block_sizes();
        assert_eq!(part.a22.shape(), (s_new + 1, s_new + 1));
        // oracle: evaluate the underlying affine map on the snapshot
        let full_x = ds.columns(&m.model.x_labels).unwrap();
        let (y1, x2) = part.solve_dataset(&ds).unwrap();
        for k in 0..ds.n_rows() {
            let y = m
                .model
                .eval(&full_x.column(k).iter().copied().collect::<Vec<_>>());
            for (r, label) in part.y1_labels.iter().enumerate() {
                let i = m.model.y_labels.iter().position(|l| l == label).unwrap();
                assert!((y1[(r, k)] - y[i]).abs() < 1e-8);
            }
            for (r, label) in part.x2_labels.iter().enumerate() {
                let i = m.model.x_labels.iter().position(|l| l == label).unwrap();
                assert!((x2[(r, k)] - full_x[(i, k)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn all_pv_to_pq_leaves_slack_reactive_power() {
        let (case, m, ds) = fitted_inverse(7);
        let types: Vec<BusType> = case
            .bus_types()
            .into_iter()
            .map(|t| if t == BusType::PV { BusType::PQ } else { t })
            .collect();
        let part = repartition(&m, &types).unwrap();
        assert_eq!(part.x2_labels.len(), 1);
        assert!(part.solve_dataset(&ds).is_ok());
    }

    #[test]
    fn moving_the_slack_is_rejected() {
        let (case, m, _) = fitted_inverse(8);
        let mut types = case.bus_types();
        let slack = case.slack_index();
        let pv = types.iter().position(|t| *t == BusType::PV).unwrap();
        types[slack] = BusType::PV;
        types[pv] = BusType::Slack;
        assert!(matches!(
            repartition(&m, &types),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn constant_pv_voltage_is_degenerate() {
        let case = cases::load("ieee5").unwrap();
        let ord = crate::network::bus_ordering(&case);
        let (x, y) = InverseModel::labels(&case, &ord);
        let (mut ds, _, _) = affine_dataset(&case, &x, &y, 40, 9);
        let pv_id = case.buses[ord.pv()[0]].id;
        let c = ds.index_of(&format!("V_{pv_id}")).unwrap();
        ds.data.column_mut(c).fill(1.02);
        assert!(matches!(
            fit_inverse(&ds, &case, &ols()),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn singular_a22_is_refused() {
        let (_, m, _) = fitted_inverse(10);
        let mut part = partition_inverse(&m).unwrap();
        part.a22.fill(0.0);
        part.a22[(0, 0)] = 1.0;
        part.cond_a22 = condition_number(&part.a22);
        let x1 = DVector::zeros(part.x1_labels.len());
        let y2 = DVector::zeros(part.y2_labels.len());
        assert!(matches!(
            part.solve(&x1, &y2),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn export_round_trip() {
        let (_, m, _) = fitted_inverse(11);
        let model = MappingModel::Inverse(m);
        let text = serde_json::to_string(&model.to_export()).unwrap();
        assert!(text.contains("\"model_kind\":\"inverse\""));
        assert!(text.contains("\"bus_ordering\""));
        assert_eq!(MappingModel::from_json_str(&text).unwrap(), model);
        assert_eq!(model.linear().engine(), Engine::Ols);
    }
}
