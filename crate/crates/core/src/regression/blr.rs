use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{empty_meta, prepare, DesignMatrices, Engine, EngineConfig, LinearModel};
use crate::error::{Error, Result};

/// Sparse Bayesian regression settings. Each coefficient has a zero-mean
/// Gaussian prior with its own precision; precisions and the noise
/// precision carry Gamma(λ1, λ2) hyperpriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlrConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    /// A coefficient whose prior standard deviation `α^{-1/2}` drops below
    /// this is fixed at zero. Measured on standardized inputs and output,
    /// so it is dimensionless.
    pub prune_threshold: f64,
    pub max_iter: usize,
    /// Starting precision of every coefficient prior. Small values start
    /// the iteration near least squares, so coefficients that only matter
    /// jointly are not pruned before their combination shows up.
    pub alpha_init: f64,
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
}

impl Default for BlrConfig {
    fn default() -> Self {
        BlrConfig {
            lambda1: 1e-6,
            lambda2: 1e-6,
            prune_threshold: 1e-2,
            max_iter: 1000,
            alpha_init: 1e-4,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlrMeta {
    /// Always `learned`: the noise precision is re-estimated every iteration.
    pub noise: String,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    /// Final noise precision per output, in the output's units.
    pub noise_precision: Vec<f64>,
    pub active: Vec<usize>,
    pub pruned: usize,
}

struct RowFit {
    coef: DVector<f64>,
    iterations: usize,
    converged: bool,
    noise_precision: f64,
    active: usize,
}

/// Evidence maximisation for one output on standardized features.
fn fit_row(
    gram: &DMatrix<f64>,
    xty: &DVector<f64>,
    yty: f64,
    n_t: usize,
    scale: &[f64],
    y_scale: f64,
    cfg: &BlrConfig,
) -> Result<RowFit> {
    let m = gram.nrows();
    let t = n_t as f64;
    let (l1, l2) = (cfg.lambda1, cfg.lambda2);
    let mut active: Vec<usize> = (0..m).collect();
    let mut alpha = vec![cfg.alpha_init; m];
    let mut beta = 10.0;
    let mut mu_full: DVector<f64> = DVector::zeros(m);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter && !active.is_empty() {
        iterations += 1;
        let k = active.len();
        let mut h = DMatrix::from_fn(k, k, |r, c| beta * gram[(active[r], active[c])]);
        for (r, &j) in active.iter().enumerate() {
            h[(r, r)] += alpha[j];
        }
        let chol = h.cholesky().ok_or_else(|| {
            Error::Numerical("posterior precision is not positive definite".into())
        })?;
        let sigma = chol.inverse();
        let rhs = DVector::from_iterator(k, active.iter().map(|&j| xty[j]));
        let mu = beta * (&sigma * &rhs);

        let g_mu = DVector::from_iterator(
            k,
            (0..k).map(|r| (0..k).map(|c| gram[(active[r], active[c])] * mu[c]).sum()),
        );
        let rss = (yty - 2.0 * mu.dot(&rhs) + mu.dot(&g_mu)).max(0.0);
        let mut gamma_sum = 0.0;
        for (r, &j) in active.iter().enumerate() {
            let gamma = (1.0 - alpha[j] * sigma[(r, r)]).clamp(0.0, 1.0);
            gamma_sum += gamma;
            alpha[j] = (gamma + 2.0 * l1) / (mu[r] * mu[r] + 2.0 * l2);
        }
        beta = (t - gamma_sum + 2.0 * l1).max(2.0 * l1) / (rss + 2.0 * l2);

        let mut change: f64 = 0.0;
        let mut next: DVector<f64> = DVector::zeros(m);
        for (r, &j) in active.iter().enumerate() {
            next[j] = mu[r];
        }
        for j in 0..m {
            change = change.max((next[j] - mu_full[j]).abs());
        }
        mu_full = next;
        let before = active.len();
        active.retain(|&j| alpha[j].powf(-0.5) >= cfg.prune_threshold);
        for j in 0..m {
            if !active.contains(&j) {
                mu_full[j] = 0.0;
            }
        }
        if change < cfg.tol && active.len() == before {
            converged = true;
            break;
        }
    }
    if active.is_empty() {
        converged = true;
    }
    let coef = DVector::from_iterator(
        m,
        (0..m).map(|j| {
            if active.contains(&j) {
                mu_full[j] * y_scale / scale[j]
            } else {
                0.0
            }
        }),
    );
    Ok(RowFit {
        coef,
        iterations,
        converged,
        noise_precision: beta / (y_scale * y_scale),
        active: active.len(),
    })
}

/// Sparse Bayesian linear regression, one output row at a time.
pub fn blr_fit(dm: &DesignMatrices, cfg: &BlrConfig) -> Result<LinearModel> {
    if !(cfg.lambda1 > 0.0
        && cfg.lambda2 > 0.0
        && cfg.prune_threshold > 0.0
        && cfg.alpha_init > 0.0
        && cfg.tol > 0.0
        && cfg.max_iter > 0)
    {
        return Err(Error::InvalidInput(
            "BLR settings must all be positive".into(),
        ));
    }
    let prep = prepare(dm);
    let (n_t, m) = prep.xs.shape();
    let n_y = prep.ys.ncols();

    let scale: Vec<f64> = (0..m)
        .map(|j| (prep.xs.column(j).norm_squared() / n_t as f64).sqrt())
        .collect();
    let mut xn = prep.xs.clone();
    for (j, mut col) in xn.column_iter_mut().enumerate() {
        col /= scale[j];
    }
    let gram = xn.tr_mul(&xn);

    let rows: Vec<Result<RowFit>> = (0..n_y)
        .into_par_iter()
        .map(|i| {
            let y = prep.ys.column(i);
            let y_scale = (y.norm_squared() / n_t as f64).sqrt();
            if m == 0 || y_scale <= 1e-15 * prep.dm.y_mean[i].abs().max(1.0) {
                return Ok(RowFit {
                    coef: DVector::zeros(m),
                    iterations: 0,
                    converged: true,
                    noise_precision: f64::INFINITY,
                    active: 0,
                });
            }
            let yn = y / y_scale;
            let xty = xn.tr_mul(&yn);
            fit_row(&gram, &xty, yn.norm_squared(), n_t, &scale, y_scale, cfg)
        })
        .collect();

    let mut a = DMatrix::zeros(n_y, m);
    let mut meta = BlrMeta {
        noise: "learned".into(),
        iterations: Vec::with_capacity(n_y),
        converged: Vec::with_capacity(n_y),
        noise_precision: Vec::with_capacity(n_y),
        active: Vec::with_capacity(n_y),
        pruned: 0,
    };
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        a.set_row(i, &row.coef.transpose());
        meta.iterations.push(row.iterations);
        meta.converged.push(row.converged);
        meta.noise_precision.push(row.noise_precision);
        meta.pruned += m - row.active;
        meta.active.push(row.active);
    }
    let mut fit_meta = empty_meta(Engine::Blr);
    fit_meta.blr = Some(meta);
    Ok(prep.finish(a, EngineConfig::Blr(cfg.clone()), fit_meta))
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{ols_fit, OlsConfig};
    use super::*;

    #[test]
    fn zero_output_prunes_everything() {
        let mut r = rng(1);
        let x = randn(3, 20, &mut r);
        let m = blr_fit(&design(x, DMatrix::zeros(1, 20)), &BlrConfig::default()).unwrap();
        assert!(m.a.iter().all(|v| v.to_bits() == 0));
        assert_eq!(m.fit_meta.blr.unwrap().pruned, 3);
    }

    #[test]
    fn single_noiseless_feature_matches_least_squares() {
        let mut r = rng(2);
        let x = randn(1, 30, &mut r);
        let y = 3.0 * &x;
        let dm = design(x, y);
        let blr = blr_fit(&dm, &BlrConfig::default()).unwrap();
        let ols = ols_fit(&dm, &OlsConfig::default()).unwrap();
        assert!((blr.a[(0, 0)] - ols.a[(0, 0)]).abs() < 1e-3);
        assert!((blr.a[(0, 0)] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn sparse_recovery() {
        let mut r = rng(3);
        // 20 features, 200 samples; three nonzero coefficients
        let x = randn(20, 200, &mut r);
        let mut a0 = DMatrix::zeros(1, 20);
        a0[(0, 2)] = 1.5;
        a0[(0, 7)] = -2.0;
        a0[(0, 15)] = 0.8;
        let y = &a0 * &x + 0.01 * randn(1, 200, &mut r);
        let m = blr_fit(&design(x, y), &BlrConfig::default()).unwrap();
        for j in [2, 7, 15] {
            assert!(m.a[(0, j)] != 0.0);
            assert!((m.a[(0, j)] - a0[(0, j)]).abs() < 0.01);
        }
        let zeros = (0..20)
            .filter(|j| ![2, 7, 15].contains(j) && m.a[(0, *j)].to_bits() == 0)
            .count();
        assert!(zeros >= 14, "only {zeros} of 17 null coefficients pruned");
    }

    #[test]
    fn pruned_entries_are_exact_zeros() {
        let mut r = rng(4);
        let x = randn(10, 80, &mut r);
        let mut a0 = DMatrix::zeros(3, 10);
        a0[(0, 1)] = 1.0;
        a0[(1, 4)] = -1.0;
        a0[(2, 9)] = 0.5;
        let y = &a0 * &x + 0.01 * randn(3, 80, &mut r);
        let m = blr_fit(&design(x, y), &BlrConfig::default()).unwrap();
        let meta = m.fit_meta.blr.as_ref().unwrap();
        let zeros = m.a.iter().filter(|v| v.to_bits() == 0).count();
        assert_eq!(zeros, meta.pruned);
        assert!(meta.pruned > 20);
    }

    #[test]
    fn settings_validated() {
        let mut r = rng(5);
        let dm = design(randn(2, 10, &mut r), randn(1, 10, &mut r));
        let cfg = BlrConfig {
            lambda1: 0.0,
            ..BlrConfig::default()
        };
        assert!(matches!(blr_fit(&dm, &cfg), Err(Error::InvalidInput(_))));
    }
}
