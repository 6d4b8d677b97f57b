use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{empty_meta, prepare, DesignMatrices, Engine, EngineConfig, LinearModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlsConfig {
    /// Number of components; `None` picks it by cross-validation.
    pub components: Option<usize>,
    pub cv_folds: usize,
    pub cv_seed: u64,
    /// Inner iteration limit per component.
    pub max_inner: usize,
    /// Convergence threshold on the change of the unit score vector.
    pub tol: f64,
    /// Extraction stops once the unexplained inputs fall below this fraction
    /// of their norm. Snapshots are solved to about 1e-8, so directions
    /// smaller than that carry solver noise rather than signal.
    pub input_floor: f64,
}

impl Default for PlsConfig {
    fn default() -> Self {
        PlsConfig {
            components: None,
            cv_folds: 5,
            cv_seed: 0,
            max_inner: 500,
            tol: 1e-10,
            input_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsMeta {
    /// Components used in the final model.
    pub components: usize,
    pub requested: Option<usize>,
    /// Held-out RMSE, pooled over all outputs, per candidate count (1, 2, …).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cv_error: Vec<f64>,
    /// Why extraction stopped before the requested count, if it did.
    pub stopped_early: Option<String>,
    pub inner_iterations: Vec<usize>,
}

/// Result of NIPALS on sample-major centered data `X` (T×M), `Y` (T×N).
///
/// `X = T Pᵀ + E` and `Y = T Cᵀ + F` with unit-norm, mutually orthogonal
/// score vectors in `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsState {
    pub t: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Weight vectors: `t_k = E_{k−1} w_k / ‖E_{k−1} w_k‖`.
    pub w: DMatrix<f64>,
    pub t_norm: Vec<f64>,
    /// X loadings, M×p.
    pub p: DMatrix<f64>,
    /// Y loadings, N×p.
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub iterations: Vec<usize>,
    pub stopped_early: Option<String>,
}

impl PlsState {
    pub fn components(&self) -> usize {
        self.t.ncols()
    }

    /// `Aᵀ = Xᵀ U (Tᵀ X Xᵀ U)⁻¹ Tᵀ Y` with the first `k` components.
    pub fn coefficients(
        &self,
        x: &DMatrix<f64>,
        y: &DMatrix<f64>,
        k: usize,
    ) -> Result<DMatrix<f64>> {
        let t = self.t.columns(0, k);
        let u = self.u.columns(0, k);
        let xtu = x.tr_mul(&u);
        let inner = t.tr_mul(x) * &xtu;
        let rhs = t.tr_mul(y);
        let z = inner
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("PLS score cross-product is singular".into()))?;
        Ok((xtu * z).transpose())
    }

    /// Predictions for centered samples `x` (rows) with 1..=p components,
    /// obtained by scoring and deflating each sample like the training data.
    fn prefix_predictions(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut xd = x.clone();
        let mut yhat = DMatrix::zeros(x.nrows(), self.c.nrows());
        let mut out = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let tau = (&xd * self.w.column(k)) / self.t_norm[k];
            xd -= &tau * self.p.column(k).transpose();
            yhat += &tau * self.c.column(k).transpose();
            out.push(yhat.clone());
        }
        out
    }
}

enum Inner {
    Converged {
        t: DVector<f64>,
        u: DVector<f64>,
        w: DVector<f64>,
        t_norm: f64,
        iterations: usize,
    },
    NoCovariance,
    Exhausted,
}

/// One NIPALS inner loop from the output score `u`.
fn inner(
    e: &DMatrix<f64>,
    f: &DMatrix<f64>,
    mut u: DVector<f64>,
    max_inner: usize,
    tol: f64,
) -> Inner {
    let mut prev: Option<DVector<f64>> = None;
    for it in 1..=max_inner {
        let w = e.tr_mul(&u);
        let mut t = e * &w;
        let tn = t.norm();
        if tn == 0.0 || !tn.is_finite() {
            return if prev.is_none() {
                Inner::NoCovariance
            } else {
                Inner::Exhausted
            };
        }
        t /= tn;
        let c = f.tr_mul(&t);
        let mut u_next = f * &c;
        let un = u_next.norm();
        let settled = prev.as_ref().is_some_and(|p| (&t - p).norm() < tol);
        if settled || un == 0.0 {
            return Inner::Converged {
                t,
                u,
                w,
                t_norm: tn,
                iterations: it,
            };
        }
        u_next /= un;
        prev = Some(t);
        u = u_next;
    }
    Inner::Exhausted
}

/// Extracts up to `max_components` PLS components. Stops early, recording
/// why, once either residual is exhausted. The input residual counts as
/// exhausted below `input_floor` times the norm of `x`.
pub fn nipals(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    max_components: usize,
    max_inner: usize,
    tol: f64,
    input_floor: f64,
) -> Result<PlsState> {
    let (n_t, m) = x.shape();
    let n_y = y.ncols();
    let mut e = x.clone();
    let mut f = y.clone();
    let x_norm = x.norm();
    let y_norm = y.norm();
    let cap = max_components.min(m).min(n_t.saturating_sub(1));
    let mut ts = Vec::new();
    let mut us = Vec::new();
    let mut ws = Vec::new();
    let mut ps = Vec::new();
    let mut cs = Vec::new();
    let mut t_norm = Vec::new();
    let mut iterations = Vec::new();
    let mut stopped_early = None;

    for k in 0..cap {
        if e.norm() <= input_floor.max(1e-12) * x_norm {
            stopped_early = Some(format!("input residual exhausted after {k} components"));
            break;
        }
        if f.norm() <= 1e-12 * y_norm || y_norm == 0.0 {
            stopped_early = Some(format!("output residual exhausted after {k} components"));
            break;
        }
        let start = (0..n_y)
            .max_by(|&a, &b| {
                f.column(a)
                    .norm_squared()
                    .total_cmp(&f.column(b).norm_squared())
            })
            .expect("at least one output");
        let mut outcome = inner(&e, &f, f.column(start).into_owned(), max_inner, tol);
        if matches!(outcome, Inner::Exhausted) {
            // Nearly tied covariance directions make the power iteration
            // crawl; restart from the dominant singular pair of EᵀF.
            let svd = e.tr_mul(&f).svd(false, true);
            let k_max = svd.singular_values.imax();
            let v1 = svd
                .v_t
                .as_ref()
                .expect("Vᵀ requested")
                .row(k_max)
                .transpose();
            outcome = inner(&e, &f, &f * v1, max_inner, tol);
        }
        let (t, u, w, tn, it) = match outcome {
            Inner::Converged {
                t,
                u,
                w,
                t_norm,
                iterations,
            } => (t, u, w, t_norm, iterations),
            Inner::NoCovariance => {
                stopped_early = Some(format!("no further covariance after {k} components"));
                break;
            }
            Inner::Exhausted => {
                return Err(Error::NipalsNonConvergence {
                    component: k + 1,
                    max_iter: max_inner,
                })
            }
        };
        let p = e.tr_mul(&t);
        let c = f.tr_mul(&t);
        e -= &t * p.transpose();
        f -= &t * c.transpose();
        ts.push(t);
        us.push(u);
        ws.push(w);
        ps.push(p);
        cs.push(c);
        t_norm.push(tn);
        iterations.push(it);
    }
    if stopped_early.is_none() && cap < max_components {
        stopped_early = Some(format!(
            "component count capped at {cap} by data dimensions"
        ));
    }
    let stack = |cols: &[DVector<f64>], rows: usize| {
        if cols.is_empty() {
            DMatrix::zeros(rows, 0)
        } else {
            DMatrix::from_columns(cols)
        }
    };
    Ok(PlsState {
        t: stack(&ts, n_t),
        u: stack(&us, n_t),
        w: stack(&ws, m),
        t_norm,
        p: stack(&ps, m),
        c: stack(&cs, n_y),
        e,
        f,
        iterations,
        stopped_early,
    })
}

/// Cross-validation error for component counts 1..=max.
fn cv_errors(x: &DMatrix<f64>, y: &DMatrix<f64>, max: usize, cfg: &PlsConfig) -> Result<Vec<f64>> {
    let n_t = x.nrows();
    let folds = cfg.cv_folds.clamp(2, n_t);
    let mut order: Vec<usize> = (0..n_t).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.cv_seed));
    let mut err = vec![0.0; max];
    for fold in 0..folds {
        let test: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds == fold)
            .map(|(_, &r)| r)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != fold)
            .map(|(_, &r)| r)
            .collect();
        if train.len() < 2 || test.is_empty() {
            continue;
        }
        let mut xtr = x.select_rows(&train);
        let mut ytr = y.select_rows(&train);
        let xm = xtr.row_mean();
        let ym = ytr.row_mean();
        for mut r in xtr.row_iter_mut() {
            r -= &xm;
        }
        for mut r in ytr.row_iter_mut() {
            r -= &ym;
        }
        let mut xte = x.select_rows(&test);
        for mut r in xte.row_iter_mut() {
            r -= &xm;
        }
        let yte = y.select_rows(&test);
        let state = nipals(&xtr, &ytr, max, cfg.max_inner, cfg.tol, cfg.input_floor)?;
        let preds = state.prefix_predictions(&xte);
        for (k, e) in err.iter_mut().enumerate() {
            let mut resid = match preds.get(k).or(preds.last()) {
                Some(p) => &yte - p,
                None => yte.clone(),
            };
            for mut r in resid.row_iter_mut() {
                r -= &ym;
            }
            *e += resid.norm_squared();
        }
    }
    let n = (n_t * y.ncols()).max(1) as f64;
    Ok(err.into_iter().map(|e| (e / n).sqrt()).collect())
}

/// Smallest count whose error is within 1% of the best.
fn parsimonious(err: &[f64]) -> usize {
    let best = err.iter().copied().fold(f64::INFINITY, f64::min);
    err.iter()
        .position(|&e| e <= best * 1.01)
        .map_or(1, |k| k + 1)
}

/// Partial least squares via NIPALS.
pub fn pls_fit(dm: &DesignMatrices, cfg: &PlsConfig) -> Result<LinearModel> {
    let n_t = dm.n_samples();
    if !(0.0..1.0).contains(&cfg.input_floor) {
        return Err(Error::InvalidInput(format!(
            "PLS input floor {} outside [0, 1)",
            cfg.input_floor
        )));
    }
    let limit = dm.x.nrows().min(n_t - 1);
    if let Some(p) = cfg.components {
        if p == 0 || p > limit {
            return Err(Error::InvalidInput(format!(
                "PLS component count {p} outside 1..={limit}"
            )));
        }
    }
    let prep = prepare(dm);
    let m = prep.xs.ncols();
    let n_y = prep.ys.ncols();
    let mut meta = empty_meta(Engine::Pls);
    let max = m.min(n_t - 1);
    if max == 0 {
        meta.pls = Some(PlsMeta {
            components: 0,
            requested: cfg.components,
            cv_error: Vec::new(),
            stopped_early: Some("no varying inputs".into()),
            inner_iterations: Vec::new(),
        });
        return Ok(prep.finish(DMatrix::zeros(n_y, 0), EngineConfig::Pls(cfg.clone()), meta));
    }

    let (target, cv_error) = match cfg.components {
        Some(p) => (p.min(max), Vec::new()),
        None if max == 1 => (1, Vec::new()),
        None => {
            let err = cv_errors(&prep.xs, &prep.ys, max, cfg)?;
            (parsimonious(&err), err)
        }
    };
    let state = nipals(
        &prep.xs,
        &prep.ys,
        target,
        cfg.max_inner,
        cfg.tol,
        cfg.input_floor,
    )?;
    let k = state.components();
    let a = if k == 0 {
        DMatrix::zeros(n_y, m)
    } else {
        state.coefficients(&prep.xs, &prep.ys, k)?
    };
    let stopped_early = state.stopped_early.clone().or_else(|| {
        (cfg.components.is_some_and(|p| p > max))
            .then(|| format!("component count capped at {max}"))
    });
    meta.pls = Some(PlsMeta {
        components: k,
        requested: cfg.components,
        cv_error,
        stopped_early,
        inner_iterations: state.iterations,
    });
    Ok(prep.finish(a, EngineConfig::Pls(cfg.clone()), meta))
}

#[cfg(test)]
mod tests {
    use super::super::test_util::*;
    use super::super::{ols_fit, predict, OlsConfig};
    use super::*;
    use proptest::prelude::*;

    fn centered(m: DMatrix<f64>) -> DMatrix<f64> {
        let mean = m.row_mean();
        let mut out = m;
        for mut r in out.row_iter_mut() {
            r -= &mean;
        }
        out
    }

    #[test]
    fn single_component_for_proportional_output() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let cfg = PlsConfig {
            components: Some(1),
            ..PlsConfig::default()
        };
        let m = pls_fit(&design(x.clone(), 2.0 * &x), &cfg).unwrap();
        assert!((m.a[(0, 0)] - 2.0).abs() < 1e-12);
        let auto = pls_fit(&design(x.clone(), 2.0 * &x), &PlsConfig::default()).unwrap();
        assert_eq!(auto.fit_meta.pls.unwrap().components, 1);
    }

    #[test]
    fn full_components_equal_least_squares() {
        for seed in 0..20 {
            let mut r = rng(100 + seed);
            let nx = 2 + (seed as usize % 6);
            let x = randn(nx, 40, &mut r);
            let y = randn(3, nx, &mut r) * &x + 0.1 * randn(3, 40, &mut r);
            let dm = design(x, y);
            let ols = ols_fit(&dm, &OlsConfig::default()).unwrap();
            let cfg = PlsConfig {
                components: Some(nx),
                ..PlsConfig::default()
            };
            let pls = pls_fit(&dm, &cfg).unwrap();
            assert!((&pls.a - &ols.a).amax() < 1e-8, "seed {seed}");
            assert!((&pls.c - &ols.c).amax() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn component_count_validated() {
        let mut r = rng(3);
        let dm = design(randn(3, 10, &mut r), randn(1, 10, &mut r));
        for p in [0, 4] {
            let cfg = PlsConfig {
                components: Some(p),
                ..PlsConfig::default()
            };
            assert!(matches!(pls_fit(&dm, &cfg), Err(Error::InvalidInput(_))));
        }
    }

    #[test]
    fn collinear_inputs_one_component_generalizes() {
        let mut r = rng(17);
        let base = randn(1, 60, &mut r);
        let x = DMatrix::from_fn(2, 60, |_, c| base[(0, c)]);
        let y = 2.0 * &base + 0.1 * randn(1, 60, &mut r);
        let (train, test): (Vec<usize>, Vec<usize>) = (0..60).partition(|c| c % 3 != 0);
        let dm = design(x.select_columns(&train), y.select_columns(&train));
        let pls = pls_fit(
            &dm,
            &PlsConfig {
                components: Some(1),
                ..PlsConfig::default()
            },
        )
        .unwrap();
        let ols = ols_fit(&dm, &OlsConfig::default()).unwrap();
        assert!(pls.a.iter().all(|v| v.is_finite()));
        let xt = x.select_columns(&test);
        let yt = y.select_columns(&test);
        let rmse = |m: &LinearModel| (predict(m, &m.x_labels, &xt).unwrap() - &yt).norm();
        assert!(rmse(&pls) <= rmse(&ols) + 1e-12);
    }

    #[test]
    fn score_predictions_match_closed_form() {
        let mut r = rng(8);
        let x = centered(randn(50, 6, &mut r));
        let y = centered(&x * randn(6, 4, &mut r) + 0.2 * randn(50, 4, &mut r));
        let state = nipals(&x, &y, 6, 500, 1e-10, 1e-8).unwrap();
        let xnew = randn(7, 6, &mut r);
        let preds = state.prefix_predictions(&xnew);
        for k in 1..=6 {
            let a = state.coefficients(&x, &y, k).unwrap();
            let direct = &xnew * a.transpose();
            assert!((&preds[k - 1] - direct).amax() < 1e-9, "k = {k}");
        }
    }

    #[test]
    fn exhausted_inputs_stop_early() {
        let mut r = rng(5);
        let base = randn(2, 30, &mut r);
        // rows 2 and 3 are combinations of rows 0 and 1
        let x = DMatrix::from_fn(4, 30, |i, c| match i {
            0 | 1 => base[(i, c)],
            2 => base[(0, c)] - base[(1, c)],
            _ => 2.0 * base[(1, c)],
        });
        let y = DMatrix::from_fn(1, 30, |_, c| base[(0, c)] + 3.0 * base[(1, c)]);
        let m = pls_fit(
            &design(x.clone(), y.clone()),
            &PlsConfig {
                components: Some(4),
                ..PlsConfig::default()
            },
        )
        .unwrap();
        let meta = m.fit_meta.pls.as_ref().unwrap();
        assert_eq!(meta.components, 2);
        assert!(meta.stopped_early.is_some());
        let pred = predict(&m, &m.x_labels, &x).unwrap();
        assert!((pred - y).amax() < 1e-10);
    }

    #[test]
    fn noise_level_direction_is_not_fitted() {
        let mut r = rng(9);
        let base = randn(2, 40, &mut r);
        let jitter = randn(1, 40, &mut r);
        // row 2 repeats row 1 up to a 1e-11 perturbation
        let x = DMatrix::from_fn(3, 40, |i, c| match i {
            2 => base[(1, c)] + 1e-11 * jitter[(0, c)],
            _ => base[(i, c)],
        });
        let y = DMatrix::from_fn(1, 40, |_, c| {
            base[(0, c)] - base[(1, c)] + 1e-11 * jitter[(0, c)] * 1e3
        });
        let m = pls_fit(&design(x.clone(), y.clone()), &PlsConfig::default()).unwrap();
        let meta = m.fit_meta.pls.as_ref().unwrap();
        assert_eq!(meta.components, 2);
        assert!(m.a.amax() < 10.0);
        let exact = PlsConfig {
            input_floor: 0.0,
            components: Some(3),
            ..PlsConfig::default()
        };
        let noisy = pls_fit(&design(x, y), &exact).unwrap();
        assert!(noisy.a.amax() > 100.0);
    }

    #[test]
    fn auto_selection_is_deterministic() {
        let mut r = rng(12);
        let x = randn(8, 60, &mut r);
        let y = randn(2, 8, &mut r) * &x + 0.3 * randn(2, 60, &mut r);
        let dm = design(x, y);
        let a = pls_fit(&dm, &PlsConfig::default()).unwrap();
        let b = pls_fit(&dm, &PlsConfig::default()).unwrap();
        assert_eq!(a, b);
        let meta = a.fit_meta.pls.unwrap();
        assert_eq!(meta.cv_error.len(), 8);
        let best = meta.cv_error.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(meta.cv_error[meta.components - 1] <= 1.01 * best);
        assert!(meta.cv_error[..meta.components - 1]
            .iter()
            .all(|&e| e > 1.01 * best));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn scores_orthogonal_and_residual_shrinks(seed in any::<u64>(), m in 2usize..7, n in 1usize..4) {
            let mut r = rng(seed);
            let x = centered(randn(25, m, &mut r));
            let y = centered(&x * randn(m, n, &mut r) + 0.5 * randn(25, n, &mut r));
            let state = nipals(&x, &y, m, 500, 1e-10, 1e-8).unwrap();
            let t = &state.t;
            for i in 0..t.ncols() {
                for j in 0..i {
                    let dot = t.column(i).dot(&t.column(j)).abs();
                    prop_assert!(dot < 1e-8 * t.column(i).norm() * t.column(j).norm());
                }
            }
            let mut e = x.clone();
            let mut last = e.norm();
            for k in 0..state.components() {
                e -= state.t.column(k) * state.p.column(k).transpose();
                let now = e.norm();
                prop_assert!(now < last);
                last = now;
            }
            prop_assert!((e - &state.e).amax() < 1e-10);
        }
    }
}
