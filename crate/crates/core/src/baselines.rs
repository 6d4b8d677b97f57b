//! Model-based linearizations: DC power flow, the decoupled linear power flow
//! (DLPF) and the constant Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::acpf::{compute_jacobian, JacobianMatrix, OperatingPoint};
use crate::error::{Error, Result};
use crate::network::{AdmittanceSet, BusOrdering, BusType, NetworkCase};

/// Bus angles from `P = B θ` with the slack row and column removed.
///
/// `p` is full length; the slack entry is ignored and its angle is zero.
pub fn dcpf_solve(case: &NetworkCase, adm: &AdmittanceSet, p: &[f64]) -> Result<Vec<f64>> {
    let n = case.n_buses();
    if p.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} injections, got {}",
            p.len()
        )));
    }
    let slack = case.slack_index();
    let keep: Vec<usize> = (0..n).filter(|&k| k != slack).collect();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| adm.b_dc[(keep[r], keep[c])]);
    let rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&k| p[k]));
    let sol = reduced.lu().solve(&rhs).ok_or_else(|| {
        Error::Singular("reduced DC susceptance matrix (islanded network?)".into())
    })?;
    let mut theta = vec![0.0; n];
    for (r, &k) in keep.iter().enumerate() {
        theta[k] = sol[r];
    }
    Ok(theta)
}

/// Injections implied by the DC model at the given angles.
pub fn dcpf_forward(adm: &AdmittanceSet, theta: &[f64]) -> Vec<f64> {
    (&adm.b_dc * DVector::from_column_slice(theta))
        .iter()
        .copied()
        .collect()
}

/// DC flow `(θ_f − θ_t) / x` on each in-service branch.
pub fn dcpf_branch_flows(case: &NetworkCase, adm: &AdmittanceSet, theta: &[f64]) -> Vec<f64> {
    adm.branches
        .iter()
        .map(|br| (theta[br.from] - theta[br.to]) / case.branches[br.branch].x)
        .collect()
}

/// Inverse of the slack-reduced DC susceptance matrix, rows and columns in
/// the non-slack block order of `ordering` (PQ then PV).
pub fn reduced_b_inverse(adm: &AdmittanceSet, ordering: &BusOrdering) -> Result<DMatrix<f64>> {
    let keep = ordering.non_slack();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| adm.b_dc[(keep[r], keep[c])]);
    reduced
        .try_inverse()
        .ok_or_else(|| Error::Singular("reduced DC susceptance matrix".into()))
}

/// Known boundary values of a DLPF solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DlpfBoundary {
    /// Full-length voltage magnitudes; read at PV and slack buses only.
    pub v: Vec<f64>,
    pub theta_slack: f64,
}

/// `[P; Q] = [[−B′, G], [−G, −B]] [θ; V]`, buses in case order.
#[derive(Debug, Clone, PartialEq)]
pub struct DlpfModel {
    pub coeff: DMatrix<f64>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    types: Vec<BusType>,
}

impl DlpfModel {
    pub fn new(case: &NetworkCase, adm: &AdmittanceSet) -> Self {
        let n = case.n_buses();
        let mut coeff = DMatrix::zeros(2 * n, 2 * n);
        coeff.view_mut((0, 0), (n, n)).copy_from(&(-&adm.b_prime));
        coeff.view_mut((0, n), (n, n)).copy_from(&adm.g);
        coeff.view_mut((n, 0), (n, n)).copy_from(&(-&adm.g));
        coeff.view_mut((n, n), (n, n)).copy_from(&(-&adm.b));
        let ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
        let labels = |a: &str, b: &str| {
            ids.iter()
                .map(|id| format!("{a}_{id}"))
                .chain(ids.iter().map(|id| format!("{b}_{id}")))
                .collect::<Vec<_>>()
        };
        DlpfModel {
            coeff,
            row_labels: labels("P", "Q"),
            col_labels: labels("theta", "V"),
            types: case.bus_types(),
        }
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    pub fn forward(&self, theta: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let x = DVector::from_iterator(2 * n, theta.iter().chain(v).copied());
        let y = &self.coeff * x;
        (
            y.rows(0, n).iter().copied().collect(),
            y.rows(n, n).iter().copied().collect(),
        )
    }

    /// Solves for θ at PQ and PV buses and V at PQ buses given P at PQ/PV
    /// buses, Q at PQ buses and the boundary values. Returns full-length
    /// (θ, V).
    pub fn solve(
        &self,
        p: &[f64],
        q: &[f64],
        boundary: &DlpfBoundary,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n();
        if p.len() != n || q.len() != n || boundary.v.len() != n {
            return Err(Error::InvalidInput(
                "DLPF inputs must be full length".into(),
            ));
        }
        let pvpq: Vec<usize> = (0..n)
            .filter(|&k| self.types[k] != BusType::Slack)
            .collect();
        let pq: Vec<usize> = (0..n).filter(|&k| self.types[k] == BusType::PQ).collect();
        let slack = (0..n)
            .find(|&k| self.types[k] == BusType::Slack)
            .expect("one slack bus");

        // unknown columns: θ(pvpq), V(pq); equation rows: P(pvpq), Q(pq)
        let rows: Vec<usize> = pvpq
            .iter()
            .copied()
            .chain(pq.iter().map(|k| k + n))
            .collect();
        let cols = rows.clone();
        let mut theta = vec![0.0; n];
        let mut v = boundary.v.clone();
        theta[slack] = boundary.theta_slack;
        for &k in &pq {
            v[k] = 0.0;
        }
        let known = DVector::from_iterator(2 * n, theta.iter().chain(&v).copied());
        let offset = &self.coeff * known;

        let m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
            self.coeff[(rows[r], cols[c])]
        });
        let rhs = DVector::from_iterator(
            rows.len(),
            rows.iter()
                .map(|&r| if r < n { p[r] } else { q[r - n] } - offset[r]),
        );
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("reduced DLPF coefficient block".into()))?;
        for (c, &col) in cols.iter().enumerate() {
            if col < n {
                theta[col] = sol[c];
            } else {
                v[col - n] = sol[c];
            }
        }
        Ok((theta, v))
    }
}

/// Linearized sending-end active flow `g (V_f − V_t) − b (θ_f − θ_t)` with
/// the series conductance and susceptance of each in-service branch.
pub fn dlpf_branch_flows(adm: &AdmittanceSet, theta: &[f64], v: &[f64]) -> Vec<f64> {
    adm.branches
        .iter()
        .map(|br| {
            let (g, b) = (adm.branch_g[br.branch], adm.branch_b[br.branch]);
            g * (v[br.from] - v[br.to]) - b * (theta[br.from] - theta[br.to])
        })
        .collect()
}

/// The Jacobian at the flat point: setpoint voltages where given, 1.0
/// elsewhere, zero angles.
pub fn constant_jacobian(case: &NetworkCase, adm: &AdmittanceSet) -> JacobianMatrix {
    compute_jacobian(adm, &OperatingPoint::flat(case, adm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::network::build_admittance;

    fn two_bus_lossless() -> NetworkCase {
        let text = include_str!("../cases/two_bus.json").replace(r#""r": 0.05"#, r#""r": 0.0"#);
        NetworkCase::from_json_str(&text).unwrap()
    }

    #[test]
    fn dc_two_bus() {
        let case = two_bus_lossless();
        let adm = build_admittance(&case);
        let theta = dcpf_solve(&case, &adm, &[0.0, -0.5]).unwrap();
        assert!((theta[1] + 0.05).abs() < 1e-12);
        assert_eq!(theta[0], 0.0);
        assert_eq!(
            dcpf_solve(&case, &adm, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn dc_islanded_network_is_singular() {
        let text = include_str!("../cases/two_bus.json")
            .replace(r#""status": true"#, r#""status": false"#);
        let case = NetworkCase::from_json_str(&text).unwrap();
        let adm = build_admittance(&case);
        assert!(matches!(
            dcpf_solve(&case, &adm, &[0.0, -0.5]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn dc_exact_in_small_angle_limit() {
        use crate::acpf::{solve_acpf, InjectionSpec, SolveOptions};
        let mut case = cases::load("ieee30").unwrap();
        for br in &mut case.branches {
            br.r = 0.0;
            br.b_sh = 0.0;
            br.tap = 1.0;
            br.shift = 0.0;
        }
        for bus in &mut case.buses {
            bus.gs = 0.0;
            bus.bs = 0.0;
            if bus.vset.is_some() {
                bus.vset = Some(1.0);
            }
        }
        let adm = build_admittance(&case);
        let eps = 1e-3;
        let mut spec = InjectionSpec::nominal(&case);
        let slack = case.slack_index();
        let sum: f64 = spec
            .p
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != slack)
            .map(|(_, p)| p)
            .sum();
        spec.p[slack] = -sum;
        for k in 0..case.n_buses() {
            spec.p[k] *= eps;
            spec.q[k] = 0.0;
        }
        let ac = solve_acpf(&case, &adm, &spec, &SolveOptions::default()).unwrap();
        let dc = dcpf_solve(&case, &adm, &spec.p).unwrap();
        let num: f64 = dc
            .iter()
            .zip(&ac.point.theta)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = ac.point.theta.iter().map(|t| t * t).sum();
        assert!((num / den).sqrt() < 1e-3, "ratio {}", (num / den).sqrt());
    }

    #[test]
    fn dlpf_homogeneous() {
        let mut case = cases::load("ieee5").unwrap();
        for br in &mut case.branches {
            br.b_sh = 0.0;
        }
        for bus in &mut case.buses {
            bus.gs = 0.0;
            bus.bs = 0.0;
        }
        let adm = build_admittance(&case);
        let model = DlpfModel::new(&case, &adm);
        let n = case.n_buses();
        let boundary = DlpfBoundary {
            v: vec![1.0; n],
            theta_slack: 0.0,
        };
        let (theta, v) = model
            .solve(&vec![0.0; n], &vec![0.0; n], &boundary)
            .unwrap();
        assert!(theta.iter().all(|t| t.abs() < 1e-12));
        assert!(v.iter().all(|m| (m - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dlpf_forward_flat_has_no_injection_without_shunts() {
        let case = cases::load("ieee5").unwrap();
        let adm = build_admittance(&case);
        let model = DlpfModel::new(&case, &adm);
        let n = case.n_buses();
        let (p, q) = model.forward(&vec![0.0; n], &vec![1.0; n]);
        // Q = −B·1 is the charging at each bus; P = G·1 = 0 without shunt conductance
        for k in 0..n {
            assert!(p[k].abs() < 1e-12);
            assert!((q[k] + adm.b.row(k).sum()).abs() < 1e-12);
        }
    }

    #[test]
    fn dlpf_forward_matches_direct_assembly() {
        let case = cases::load("ieee30").unwrap();
        let adm = build_admittance(&case);
        let model = DlpfModel::new(&case, &adm);
        let n = case.n_buses();
        let theta: Vec<f64> = (0..n).map(|k| 0.01 * ((k * 7 % 11) as f64 - 5.0)).collect();
        let v: Vec<f64> = (0..n)
            .map(|k| 1.0 + 0.003 * ((k * 5 % 7) as f64 - 3.0))
            .collect();
        let (p, q) = model.forward(&theta, &v);
        for i in 0..n {
            let mut pi = 0.0;
            let mut qi = 0.0;
            for j in 0..n {
                pi += -adm.b_prime[(i, j)] * theta[j] + adm.g[(i, j)] * v[j];
                qi += -adm.g[(i, j)] * theta[j] - adm.b[(i, j)] * v[j];
            }
            assert!((p[i] - pi).abs() < 1e-10);
            assert!((q[i] - qi).abs() < 1e-10);
        }
    }

    #[test]
    fn dlpf_round_trip() {
        for name in ["ieee5", "ieee30", "ieee57"] {
            let case = cases::load(name).unwrap();
            let adm = build_admittance(&case);
            let model = DlpfModel::new(&case, &adm);
            let n = case.n_buses();
            let slack = case.slack_index();
            let mut theta: Vec<f64> = (0..n).map(|k| 0.02 * ((k * 3 % 13) as f64 - 6.0)).collect();
            theta[slack] = 0.0;
            let v: Vec<f64> = (0..n)
                .map(|k| 1.0 + 0.002 * ((k % 9) as f64 - 4.0))
                .collect();
            let (p, q) = model.forward(&theta, &v);
            let boundary = DlpfBoundary {
                v: v.clone(),
                theta_slack: 0.0,
            };
            let (theta2, v2) = model.solve(&p, &q, &boundary).unwrap();
            for k in 0..n {
                assert!((theta[k] - theta2[k]).abs() < 1e-10, "{name}");
                assert!((v[k] - v2[k]).abs() < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn constant_jacobian_is_flat_evaluation() {
        let case = two_bus_lossless();
        let adm = build_admittance(&case);
        let jac = constant_jacobian(&case, &adm);
        assert!((jac.dp_dtheta[(1, 1)] - 10.0).abs() < 1e-12);
        let direct = compute_jacobian(&adm, &OperatingPoint::flat(&case, &adm));
        assert_eq!(jac, direct);
    }
}
