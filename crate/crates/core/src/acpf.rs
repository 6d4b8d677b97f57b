//! AC power flow: injection equations, analytic Jacobian, branch flows and a
//! polar Newton–Raphson solver.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AdmittanceSet, BusOrdering, BusType, NetworkCase};

/// Specified quantities of a power flow problem, as full-length vectors in
/// case order. Only the entries matching each bus type are used: `p` at PQ
/// and PV buses, `q` at PQ buses, `v` at PV and slack buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub theta_slack: f64,
}

impl InjectionSpec {
    /// Scheduled generation minus demand, setpoints from the bus data.
    pub fn nominal(case: &NetworkCase) -> Self {
        let (pg, qg) = case.generation();
        let p = case.buses.iter().zip(&pg).map(|(b, g)| g - b.pd).collect();
        let q = case.buses.iter().zip(&qg).map(|(b, g)| g - b.qd).collect();
        let v = case.buses.iter().map(|b| b.vset.unwrap_or(1.0)).collect();
        InjectionSpec {
            p,
            q,
            v,
            theta_slack: 0.0,
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.p.len() != n || self.q.len() != n || self.v.len() != n {
            return Err(Error::InvalidInput(format!(
                "injection spec lengths ({}, {}, {}) do not match {n} buses",
                self.p.len(),
                self.q.len(),
                self.v.len()
            )));
        }
        Ok(())
    }
}

/// A full network state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Sending-end flows of in-service branches, in file order.
    pub pf: Vec<f64>,
    pub qf: Vec<f64>,
}

impl OperatingPoint {
    /// Completes a voltage state with its injections and branch flows.
    pub fn from_voltages(adm: &AdmittanceSet, v: Vec<f64>, theta: Vec<f64>) -> Self {
        let (p, q) = injections(adm, &v, &theta);
        let (pf, qf) = branch_flows(adm, &v, &theta);
        OperatingPoint {
            v,
            theta,
            p,
            q,
            pf,
            qf,
        }
    }

    /// V from the setpoints where given, 1.0 elsewhere, all angles zero.
    pub fn flat(case: &NetworkCase, adm: &AdmittanceSet) -> Self {
        let v = case.buses.iter().map(|b| b.vset.unwrap_or(1.0)).collect();
        Self::from_voltages(adm, v, vec![0.0; case.n_buses()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Flat,
    Warm(OperatingPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub start: Start,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 20,
            start: Start::Flat,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcpfSolution {
    pub point: OperatingPoint,
    /// Newton updates taken.
    pub iterations: usize,
    /// Infinity norm of the power mismatch over the solved equations.
    pub mismatch: f64,
}

/// Bus injections `P_i = V_i Σ V_j (G cos θ_ij + B sin θ_ij)` and
/// `Q_i = V_i Σ V_j (G sin θ_ij − B cos θ_ij)`.
pub fn injections(adm: &AdmittanceSet, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = adm.n();
    let vr = DVector::from_iterator(n, v.iter().zip(theta).map(|(m, a)| m * a.cos()));
    let vi = DVector::from_iterator(n, v.iter().zip(theta).map(|(m, a)| m * a.sin()));
    let ir = &adm.g * &vr - &adm.b * &vi;
    let ii = &adm.g * &vi + &adm.b * &vr;
    let p = (0..n).map(|k| vr[k] * ir[k] + vi[k] * ii[k]).collect();
    let q = (0..n).map(|k| vi[k] * ir[k] - vr[k] * ii[k]).collect();
    (p, q)
}

/// Sending-end complex power of every in-service branch.
///
/// For a branch with no charging, unit tap and no phase shift this is
/// `PF = (V_i² − V_iV_j cos θ_ij) g − V_iV_j sin θ_ij b` and
/// `QF = −(V_i² − V_iV_j cos θ_ij) b − V_iV_j sin θ_ij g`.
pub fn branch_flows(adm: &AdmittanceSet, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (from, _) = branch_flows_both_ends(adm, v, theta);
    from.into_iter().map(|s| (s.re, s.im)).unzip()
}

/// Complex power entering each in-service branch at its from and to ends.
pub fn branch_flows_both_ends(
    adm: &AdmittanceSet,
    v: &[f64],
    theta: &[f64],
) -> (Vec<Complex<f64>>, Vec<Complex<f64>>) {
    let phasor = |k: usize| Complex::from_polar(v[k], theta[k]);
    adm.branches
        .iter()
        .map(|br| {
            let vf = phasor(br.from);
            let vt = phasor(br.to);
            let sf = vf * (br.yff * vf + br.yft * vt).conj();
            let st = vt * (br.ytf * vf + br.ytt * vt).conj();
            (sf, st)
        })
        .unzip()
}

/// The four N×N blocks of the power flow Jacobian, before any row or column
/// is removed for bus types.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    pub dp_dtheta: DMatrix<f64>,
    pub dp_dv: DMatrix<f64>,
    pub dq_dtheta: DMatrix<f64>,
    pub dq_dv: DMatrix<f64>,
    pub point: OperatingPoint,
}

impl JacobianMatrix {
    /// `[[∂P/∂θ, ∂P/∂V], [∂Q/∂θ, ∂Q/∂V]]`, buses in case order.
    pub fn full(&self) -> DMatrix<f64> {
        let n = self.dp_dtheta.nrows();
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&self.dp_dtheta);
        j.view_mut((0, n), (n, n)).copy_from(&self.dp_dv);
        j.view_mut((n, 0), (n, n)).copy_from(&self.dq_dtheta);
        j.view_mut((n, n), (n, n)).copy_from(&self.dq_dv);
        j
    }

    /// Same layout as [`full`](Self::full) with every block permuted into
    /// PQ, PV, slack order.
    pub fn full_ordered(&self, ordering: &BusOrdering) -> DMatrix<f64> {
        let n = ordering.len();
        let full = self.full();
        let idx: Vec<usize> = ordering
            .perm
            .iter()
            .copied()
            .chain(ordering.perm.iter().map(|p| p + n))
            .collect();
        DMatrix::from_fn(2 * n, 2 * n, |r, c| full[(idx[r], idx[c])])
    }
}

pub fn compute_jacobian(adm: &AdmittanceSet, point: &OperatingPoint) -> JacobianMatrix {
    let n = adm.n();
    let (v, theta) = (&point.v, &point.theta);
    let (p, q) = injections(adm, v, theta);
    let mut dp_dtheta = DMatrix::zeros(n, n);
    let mut dp_dv = DMatrix::zeros(n, n);
    let mut dq_dtheta = DMatrix::zeros(n, n);
    let mut dq_dv = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (g, b) = (adm.g[(i, j)], adm.b[(i, j)]);
            if i == j || (g == 0.0 && b == 0.0) {
                continue;
            }
            let (s, c) = (theta[i] - theta[j]).sin_cos();
            let gc_bs = g * c + b * s;
            let gs_bc = g * s - b * c;
            dp_dtheta[(i, j)] = v[i] * v[j] * gs_bc;
            dp_dv[(i, j)] = v[i] * gc_bs;
            dq_dtheta[(i, j)] = -v[i] * v[j] * gc_bs;
            dq_dv[(i, j)] = v[i] * gs_bc;
        }
        let (gii, bii) = (adm.g[(i, i)], adm.b[(i, i)]);
        dp_dtheta[(i, i)] = -q[i] - bii * v[i] * v[i];
        dp_dv[(i, i)] = p[i] / v[i] + gii * v[i];
        dq_dtheta[(i, i)] = p[i] - gii * v[i] * v[i];
        dq_dv[(i, i)] = q[i] / v[i] - bii * v[i];
    }
    JacobianMatrix {
        dp_dtheta,
        dp_dv,
        dq_dtheta,
        dq_dv,
        point: point.clone(),
    }
}

/// Newton–Raphson in polar coordinates. PV reactive limits are not enforced.
pub fn solve_acpf(
    case: &NetworkCase,
    adm: &AdmittanceSet,
    spec: &InjectionSpec,
    opts: &SolveOptions,
) -> Result<AcpfSolution> {
    let n = case.n_buses();
    spec.check(n)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let types = case.bus_types();
    let pvpq: Vec<usize> = (0..n).filter(|&k| types[k] != BusType::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| types[k] == BusType::PQ).collect();
    let slack = case.slack_index();

    let (mut v, mut theta) = match &opts.start {
        Start::Flat => (vec![1.0; n], vec![0.0; n]),
        Start::Warm(point) => {
            if point.v.len() != n || point.theta.len() != n {
                return Err(Error::InvalidInput("warm start has wrong length".into()));
            }
            (point.v.clone(), point.theta.clone())
        }
    };
    for k in 0..n {
        if types[k] != BusType::PQ {
            v[k] = spec.v[k];
        }
    }
    theta[slack] = spec.theta_slack;

    let n_eq = pvpq.len() + pq.len();
    let mut iteration = 0;
    loop {
        let (p, q) = injections(adm, &v, &theta);
        let mut mismatch = DVector::zeros(n_eq);
        for (r, &k) in pvpq.iter().enumerate() {
            mismatch[r] = p[k] - spec.p[k];
        }
        for (r, &k) in pq.iter().enumerate() {
            mismatch[pvpq.len() + r] = q[k] - spec.q[k];
        }
        let norm = mismatch.amax();
        if !norm.is_finite() || v.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: iteration,
                mismatch: f64::INFINITY,
            });
        }
        if norm < opts.tol {
            let (pf, qf) = branch_flows(adm, &v, &theta);
            return Ok(AcpfSolution {
                point: OperatingPoint {
                    v,
                    theta,
                    p,
                    q,
                    pf,
                    qf,
                },
                iterations: iteration,
                mismatch: norm,
            });
        }
        if iteration == opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: iteration,
                mismatch: norm,
            });
        }

        let point = OperatingPoint {
            v: v.clone(),
            theta: theta.clone(),
            p,
            q,
            pf: Vec::new(),
            qf: Vec::new(),
        };
        let reduced = reduce(&compute_jacobian(adm, &point), &pvpq, &pq);
        let step = reduced
            .lu()
            .solve(&(-mismatch))
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or(Error::SingularJacobian { iteration })?;
        for (r, &k) in pvpq.iter().enumerate() {
            theta[k] += step[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            v[k] += step[pvpq.len() + r];
        }
        iteration += 1;
    }
}

fn reduce(jac: &JacobianMatrix, pvpq: &[usize], pq: &[usize]) -> DMatrix<f64> {
    let JacobianMatrix {
        dp_dtheta,
        dp_dv,
        dq_dtheta,
        dq_dv,
        ..
    } = jac;
    let n_eq = pvpq.len() + pq.len();
    let mut j = DMatrix::zeros(n_eq, n_eq);
    for (r, &i) in pvpq.iter().enumerate() {
        for (c, &k) in pvpq.iter().enumerate() {
            j[(r, c)] = dp_dtheta[(i, k)];
        }
        for (c, &k) in pq.iter().enumerate() {
            j[(r, pvpq.len() + c)] = dp_dv[(i, k)];
        }
    }
    for (r, &i) in pq.iter().enumerate() {
        let r = pvpq.len() + r;
        for (c, &k) in pvpq.iter().enumerate() {
            j[(r, c)] = dq_dtheta[(i, k)];
        }
        for (c, &k) in pq.iter().enumerate() {
            j[(r, pvpq.len() + c)] = dq_dv[(i, k)];
        }
    }
    j
}

/// Largest absolute deviation between a point's stored injections and the
/// injections recomputed from its voltages.
pub fn residual(adm: &AdmittanceSet, point: &OperatingPoint) -> f64 {
    let (p, q) = injections(adm, &point.v, &point.theta);
    p.iter()
        .zip(&point.p)
        .chain(q.iter().zip(&point.q))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::network::build_admittance;

    fn two_bus(r: f64, x: f64) -> NetworkCase {
        let text = include_str!("../cases/two_bus.json")
            .replace(r#""r": 0.05"#, &format!(r#""r": {r}"#))
            .replace(r#""x": 0.1"#, &format!(r#""x": {x}"#));
        NetworkCase::from_json_str(&text).unwrap()
    }

    fn spec_two_bus(p2: f64, q2: f64) -> InjectionSpec {
        InjectionSpec {
            p: vec![0.0, p2],
            q: vec![0.0, q2],
            v: vec![1.0, 1.0],
            theta_slack: 0.0,
        }
    }

    // Fixed-point iteration V2 <- (conj(S2)/conj(V2) - Y21 V1) / Y22.
    fn gauss_seidel(
        y: &DMatrix<Complex<f64>>,
        s2: Complex<f64>,
        max_iter: usize,
    ) -> Option<Complex<f64>> {
        let v1 = Complex::new(1.0, 0.0);
        let mut v2 = Complex::new(1.0, 0.0);
        for _ in 0..max_iter {
            let next = ((s2 / v2).conj() - y[(1, 0)] * v1) / y[(1, 1)];
            if (next - v2).norm() < 1e-13 {
                return Some(next);
            }
            if !next.norm().is_finite() || next.norm() < 0.05 {
                return None;
            }
            v2 = next;
        }
        None
    }

    fn ybus(adm: &AdmittanceSet) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(adm.n(), adm.n(), |i, j| {
            Complex::new(adm.g[(i, j)], adm.b[(i, j)])
        })
    }

    #[test]
    fn zero_injection_flat_solution() {
        let case = two_bus(0.0, 0.1);
        let adm = build_admittance(&case);
        let sol = solve_acpf(
            &case,
            &adm,
            &spec_two_bus(0.0, 0.0),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.point.v, vec![1.0, 1.0]);
        assert_eq!(sol.point.theta, vec![0.0, 0.0]);
    }

    #[test]
    fn two_bus_matches_gauss_seidel() {
        let case = two_bus(0.0, 0.1);
        let adm = build_admittance(&case);
        let sol = solve_acpf(
            &case,
            &adm,
            &spec_two_bus(-0.5, 0.0),
            &SolveOptions::default(),
        )
        .unwrap();
        let v2 = gauss_seidel(&ybus(&adm), Complex::new(-0.5, 0.0), 10_000).unwrap();
        assert!((sol.point.v[1] - v2.norm()).abs() < 1e-8);
        assert!((sol.point.theta[1] - v2.arg()).abs() < 1e-8);
        // slack picks up the load: no losses on a lossless line
        assert!((sol.point.p[0] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn beyond_loadability_fails() {
        let case = two_bus(0.0, 0.1);
        let adm = build_admittance(&case);
        let y = ybus(&adm);
        let (mut lo, mut hi) = (0.0, 20.0);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if gauss_seidel(&y, Complex::new(-mid, 0.0), 200_000).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // analytic bound V1² / (2x) for a purely active load
        assert!((lo - 5.0).abs() < 0.1, "bound {lo}");
        let err = solve_acpf(
            &case,
            &adm,
            &spec_two_bus(-1.2 * hi, 0.0),
            &SolveOptions::default(),
        )
        .unwrap_err();
        assert!(
            matches!(
                err,
                Error::NonConvergence { .. } | Error::SingularJacobian { .. }
            ),
            "{err}"
        );
        // just inside the bound still converges
        solve_acpf(
            &case,
            &adm,
            &spec_two_bus(-0.9 * lo, 0.0),
            &SolveOptions::default(),
        )
        .unwrap();
    }

    #[test]
    fn flat_jacobian_two_bus() {
        let case = two_bus(0.0, 0.1);
        let adm = build_admittance(&case);
        let jac = compute_jacobian(&adm, &OperatingPoint::flat(&case, &adm));
        assert!((jac.dp_dtheta[(1, 1)] - 10.0).abs() < 1e-12);
        assert!((jac.dp_dtheta[(1, 0)] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn flows_at_flat_are_zero_without_shunts() {
        let case = two_bus(0.05, 0.1);
        let adm = build_admittance(&case);
        let (pf, qf) = branch_flows(&adm, &[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!((pf[0], qf[0]), (0.0, 0.0));
    }

    #[test]
    fn lossless_flow_by_substitution() {
        let case = two_bus(0.0, 0.1);
        let adm = build_admittance(&case);
        let (pf, _) = branch_flows(&adm, &[1.0, 1.0], &[0.0, -0.05]);
        assert!((pf[0] - 10.0 * 0.05f64.sin()).abs() < 1e-12);
        assert!((pf[0] - 0.499792).abs() < 1e-5);
    }

    #[test]
    fn warm_start_from_solution_takes_no_step() {
        let case = cases::load("ieee30").unwrap();
        let adm = build_admittance(&case);
        let spec = InjectionSpec::nominal(&case);
        let sol = solve_acpf(&case, &adm, &spec, &SolveOptions::default()).unwrap();
        let opts = SolveOptions {
            start: Start::Warm(sol.point.clone()),
            ..SolveOptions::default()
        };
        let again = solve_acpf(&case, &adm, &spec, &opts).unwrap();
        assert!(again.iterations <= 1);
    }

    #[test]
    fn ieee5_losses_nonnegative() {
        let case = cases::load("ieee5").unwrap();
        let adm = build_admittance(&case);
        let sol = solve_acpf(
            &case,
            &adm,
            &InjectionSpec::nominal(&case),
            &SolveOptions::default(),
        )
        .unwrap();
        let (from, to) = branch_flows_both_ends(&adm, &sol.point.v, &sol.point.theta);
        let mut total = 0.0;
        for (sf, st) in from.iter().zip(&to) {
            let loss = sf.re + st.re;
            assert!(loss >= -1e-12, "negative loss {loss}");
            total += loss;
        }
        let injected: f64 = sol.point.p.iter().sum();
        assert!((injected - total).abs() < 1e-8);
    }

    #[test]
    fn nonpositive_tolerance_rejected() {
        let case = two_bus(0.0, 0.1);
        let adm = build_admittance(&case);
        let opts = SolveOptions {
            tol: 0.0,
            ..SolveOptions::default()
        };
        assert!(matches!(
            solve_acpf(&case, &adm, &spec_two_bus(0.0, 0.0), &opts),
            Err(Error::InvalidInput(_))
        ));
    }
}
