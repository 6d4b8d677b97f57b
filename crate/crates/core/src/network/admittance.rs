use nalgebra::{Complex, DMatrix};

use super::NetworkCase;

/// Two-port admittances of one in-service branch (π model with tap and
/// phase shift folded in), indexed by bus position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    /// Position of the branch in `NetworkCase::branches`.
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub yff: Complex<f64>,
    pub yft: Complex<f64>,
    pub ytf: Complex<f64>,
    pub ytt: Complex<f64>,
}

/// Dense admittance structures of a case.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceSet {
    /// Real part of the bus admittance matrix.
    pub g: DMatrix<f64>,
    /// Imaginary part of the bus admittance matrix.
    pub b: DMatrix<f64>,
    /// Imaginary part assembled without bus shunts and line charging.
    pub b_prime: DMatrix<f64>,
    /// DC power flow susceptance matrix built from `1/x` only (taps and
    /// shunts ignored), with the sign convention `P = b_dc θ`.
    pub b_dc: DMatrix<f64>,
    /// Series conductance `Re(1/(r + jx))` of every branch (in-service or not).
    pub branch_g: Vec<f64>,
    /// Series susceptance `Im(1/(r + jx))` of every branch.
    pub branch_b: Vec<f64>,
    /// Two-port terms for in-service branches, in file order.
    pub branches: Vec<BranchAdmittance>,
}

impl AdmittanceSet {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }
}

pub fn build_admittance(case: &NetworkCase) -> AdmittanceSet {
    let n = case.n_buses();
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    let mut b_prime = DMatrix::<f64>::zeros(n, n);
    let mut b_dc = DMatrix::<f64>::zeros(n, n);
    let mut branch_g = Vec::with_capacity(case.branches.len());
    let mut branch_b = Vec::with_capacity(case.branches.len());
    let mut terms = Vec::new();

    for (k, br) in case.branches.iter().enumerate() {
        let ys = if br.x == 0.0 && br.r == 0.0 {
            Complex::new(0.0, 0.0)
        } else {
            Complex::new(1.0, 0.0) / Complex::new(br.r, br.x)
        };
        branch_g.push(ys.re);
        branch_b.push(ys.im);
        if !br.status {
            continue;
        }
        let f = case.bus_index(br.from).expect("validated branch end");
        let t = case.bus_index(br.to).expect("validated branch end");
        let ratio = Complex::from_polar(br.tap, br.shift);

        let charging = Complex::new(0.0, br.b_sh / 2.0);
        let ytt = ys + charging;
        let yff = ytt / (br.tap * br.tap);
        let yft = -ys / ratio.conj();
        let ytf = -ys / ratio;

        y[(f, f)] += yff;
        y[(f, t)] += yft;
        y[(t, f)] += ytf;
        y[(t, t)] += ytt;

        // Same stamp with the charging term removed.
        b_prime[(f, f)] += (ys / (br.tap * br.tap)).im;
        b_prime[(f, t)] += yft.im;
        b_prime[(t, f)] += ytf.im;
        b_prime[(t, t)] += ys.im;

        let bx = 1.0 / br.x;
        b_dc[(f, f)] += bx;
        b_dc[(t, t)] += bx;
        b_dc[(f, t)] -= bx;
        b_dc[(t, f)] -= bx;

        terms.push(BranchAdmittance {
            branch: k,
            from: f,
            to: t,
            yff,
            yft,
            ytf,
            ytt,
        });
    }
    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += Complex::new(bus.gs, bus.bs);
    }

    AdmittanceSet {
        g: y.map(|c| c.re),
        b: y.map(|c| c.im),
        b_prime,
        b_dc,
        branch_g,
        branch_b,
        branches: terms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::TWO_BUS;

    #[test]
    fn two_bus_lossless() {
        let case = NetworkCase::from_json_str(TWO_BUS).unwrap();
        let adm = build_admittance(&case);
        let expected = DMatrix::from_row_slice(2, 2, &[-10.0, 10.0, 10.0, -10.0]);
        assert!((&adm.b - &expected).amax() < 1e-12);
        assert_eq!(adm.g.amax(), 0.0);
        assert_eq!(adm.b_prime, adm.b);
        assert!((adm.b_dc[(1, 1)] - 10.0).abs() < 1e-12);
        assert!((adm.branch_b[0] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn shunts_excluded_from_b_prime() {
        let text = TWO_BUS
            .replace(r#""b": 0.0"#, r#""b": 0.2"#)
            .replace(r#""Gs": 0.0, "Bs": 0.0}"#, r#""Gs": 0.01, "Bs": 0.05}"#);
        let case = NetworkCase::from_json_str(&text).unwrap();
        let adm = build_admittance(&case);
        assert!((adm.b[(1, 1)] - (-10.0 + 0.1 + 0.05)).abs() < 1e-12);
        assert!((adm.b[(0, 0)] - (-10.0 + 0.1)).abs() < 1e-12);
        assert!((adm.g[(1, 1)] - 0.01).abs() < 1e-12);
        for i in 0..2 {
            assert!(adm.b_prime.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn off_nominal_tap() {
        let text = TWO_BUS.replace(r#""tap": 1.0"#, r#""tap": 0.95"#);
        let case = NetworkCase::from_json_str(&text).unwrap();
        let adm = build_admittance(&case);
        // y_ff = ys / t², y_ft = -ys / t, y_tt = ys
        assert!((adm.b[(0, 0)] - (-10.0 / 0.9025)).abs() < 1e-12);
        assert!((adm.b[(0, 1)] - (10.0 / 0.95)).abs() < 1e-12);
        assert!((adm.b[(1, 1)] + 10.0).abs() < 1e-12);
        // DC matrix ignores the tap
        assert!((adm.b_dc[(0, 0)] - 10.0).abs() < 1e-12);
    }
}
