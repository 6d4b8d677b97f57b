use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{empty_meta, prepare, DesignMatrices, Engine, EngineConfig, LinearModel};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OlsConfig {
    /// Singular values below `rcond · σ_max` are treated as zero. `None`
    /// uses `max(M, T) · ε`.
    pub rcond: Option<f64>,
    /// Condition numbers above this are flagged.
    pub cond_warn: f64,
}

impl Default for OlsConfig {
    fn default() -> Self {
        OlsConfig {
            rcond: None,
            cond_warn: 1e10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsMeta {
    pub rank: usize,
    /// `σ_max / σ_min` of the centered inputs (infinite when singular).
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

/// Minimum-norm least squares via the SVD of the centered inputs.
pub fn ols_fit(dm: &DesignMatrices, cfg: &OlsConfig) -> Result<LinearModel> {
    let prep = prepare(dm);
    let (t, m) = prep.xs.shape();
    let n_y = prep.ys.ncols();
    let mut meta = empty_meta(Engine::Ols);
    if m == 0 {
        meta.ols = Some(OlsMeta {
            rank: 0,
            condition_number: f64::INFINITY,
            ill_conditioned: true,
        });
        return Ok(prep.finish(DMatrix::zeros(n_y, 0), EngineConfig::Ols(cfg.clone()), meta));
    }

    let svd = prep.xs.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    let rcond = cfg.rcond.unwrap_or(m.max(t) as f64 * f64::EPSILON);
    let cut = rcond * s_max;
    let rank = s.iter().filter(|&&v| v > cut).count();
    let condition_number = if s_min > 0.0 {
        s_max / s_min
    } else {
        f64::INFINITY
    };

    // Xs = U S Vᵀ (T×M), Aᵀ = V S⁺ Uᵀ Ys
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    let mut uty = u.transpose() * &prep.ys;
    for (k, mut row) in uty.row_iter_mut().enumerate() {
        if s[k] > cut {
            row /= s[k];
        } else {
            row.fill(0.0);
        }
    }
    let a_t = v_t.transpose() * uty;

    meta.ols = Some(OlsMeta {
        rank,
        condition_number,
        ill_conditioned: rank < m || condition_number > cfg.cond_warn,
    });
    Ok(prep.finish(a_t.transpose(), EngineConfig::Ols(cfg.clone()), meta))
}
