//! Gaussian mixtures and mixtures of factor analyzers fitted by EM.
//!
//! Both families share one EM driver ([`em_fit_gmm`], [`em_fit_mfa`]);
//! they differ only in the covariance M-step. [`encoded_mixture_fit`] fits
//! either family on `X·B` for a [`FeatureEncoder`] `B` and decodes the
//! component parameters back to the original features as `μ·Bᵀ` and
//! `B·Σ·Bᵀ`.

mod em;

use std::time::Instant;

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef};
use serde::Serialize;

use crate::encoding::{encode_features, FeatureEncoder};
use crate::linalg;
use crate::{DataMatrix, Error, Result};

pub use em::{em_fit_gmm, em_fit_mfa};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    FullCovariance,
    FactorAnalytic { q_factors: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::FullCovariance => "full-covariance",
            Family::FactorAnalytic { .. } => "factor-analytic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// D²-weighted seeding of centres, then one hard assignment.
    KMeansPlusPlus,
}

#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop when the log-likelihood gain per sample falls below this.
    pub rel_tolerance: f64,
    /// Covariance ridge is `ridge_scale · trace(S) / d` for the pooled
    /// sample covariance `S` (full-covariance family only).
    pub ridge_scale: f64,
    /// Independent initializations; the best final log-likelihood wins.
    pub n_restarts: usize,
    pub init: InitScheme,
    pub seed: u64,
    /// Add the encoder's construction time to an encoded fit's runtime.
    pub include_encoder_construction: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            rel_tolerance: 1e-8,
            ridge_scale: 1e-6,
            n_restarts: 10,
            init: InitScheme::KMeansPlusPlus,
            seed: 0,
            include_encoder_construction: false,
        }
    }
}

/// Per-fit numerical health record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmDiagnostics {
    /// Smallest log-likelihood change between consecutive EM iterations,
    /// excluding iterations that re-seeded an empty component. `+∞` when
    /// there was no such pair.
    pub min_loglik_change: f64,
    /// Largest `|Σ_i τ_ji − 1|` over every E-step row.
    pub max_responsibility_error: f64,
    pub reseeds: usize,
    /// M-steps undone because they lowered the log-likelihood. The
    /// covariance ridge can do this once the fit is within rounding of its
    /// fixed point; the run stops at the first such step.
    pub rejected_steps: usize,
}

impl Default for EmDiagnostics {
    fn default() -> Self {
        Self { min_loglik_change: f64::INFINITY, max_responsibility_error: 0.0, reseeds: 0, rejected_steps: 0 }
    }
}

/// Factor-analytic parameters of each component.
#[derive(Debug, Clone)]
pub struct FactorParams {
    /// `Λ_i`, `d × q` each.
    pub loadings: Vec<Mat<f64>>,
    /// `diag(D_i)`, length `d` each.
    pub noise_diag: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    /// `k × d`, one row per component.
    pub means: Mat<f64>,
    pub covariances: Vec<Mat<f64>>,
    pub factors: Option<FactorParams>,
    pub loglik_trace: Vec<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    pub diagnostics: EmDiagnostics,
    pub runtime_seconds: f64,
}

impl MixtureModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn family(&self) -> Family {
        match &self.factors {
            None => Family::FullCovariance,
            Some(f) => Family::FactorAnalytic { q_factors: f.loadings[0].ncols() },
        }
    }

    pub fn loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// `log π_i + log N(x_j; μ_i, Σ_i)` for every row `j` and component `i`.
    pub fn log_weighted_densities(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::dim(format!("model has {} dims, data {}", self.dim(), x.ncols())));
        }
        let chols = self
            .covariances
            .iter()
            .map(|c| linalg::spd_factor(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(log_weighted_densities(x, &self.weights, self.means.as_ref(), &chols))
    }

    /// Total log-likelihood of `x` under the model.
    pub fn log_likelihood(&self, x: MatRef<'_, f64>) -> Result<f64> {
        let lw = self.log_weighted_densities(x)?;
        Ok((0..lw.nrows()).map(|j| log_sum_exp_row(lw.as_ref(), j)).sum())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&MixtureModelJson::from(self)).expect("plain struct serializes")
    }
}

pub(crate) fn log_sum_exp_row(m: MatRef<'_, f64>, row: usize) -> f64 {
    let max = (0..m.ncols()).map(|i| m[(row, i)]).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + (0..m.ncols()).map(|i| (m[(row, i)] - max).exp()).sum::<f64>().ln()
}

pub(crate) fn log_weighted_densities(
    x: MatRef<'_, f64>,
    weights: &[f64],
    means: MatRef<'_, f64>,
    chols: &[Llt<f64>],
) -> Mat<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut out = Mat::<f64>::zeros(n, weights.len());
    for (c, llt) in chols.iter().enumerate() {
        let centered_t = Mat::from_fn(d, n, |a, j| x[(j, a)] - means[(c, a)]);
        let solved = llt.solve(centered_t.as_ref());
        let konst = weights[c].ln() - 0.5 * (d as f64 * LN_2PI + linalg::llt_log_det(llt));
        for j in 0..n {
            let quad: f64 = (0..d).map(|a| centered_t[(a, j)] * solved[(a, j)]).sum();
            out[(j, c)] = konst - 0.5 * quad;
        }
    }
    out
}

/// MAP component of every row; ties go to the lowest index.
pub fn cluster_assign(model: &MixtureModel, x: MatRef<'_, f64>) -> Result<Vec<usize>> {
    let lw = model.log_weighted_densities(x)?;
    Ok((0..lw.nrows())
        .map(|j| {
            let mut best = 0;
            for i in 1..lw.ncols() {
                if lw[(j, i)] > lw[(j, best)] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Mixture fitted in an encoded feature space, with its decoded view.
#[derive(Debug, Clone)]
pub struct EncodedMixtureFit {
    pub encoder: FeatureEncoder,
    pub model_enc: MixtureModel,
    /// `μ_enc·Bᵀ`, `k × p`.
    pub decoded_means: Mat<f64>,
    /// `B·Σ_enc·Bᵀ`, `p × p` of rank at most `r`.
    pub decoded_covariances: Vec<Mat<f64>>,
    pub runtime_seconds: f64,
}

impl EncodedMixtureFit {
    /// Cluster labels for raw (unencoded) rows.
    pub fn assign(&self, x: MatRef<'_, f64>) -> Result<Vec<usize>> {
        let xe = encode_features(&self.encoder, x)?;
        cluster_assign(&self.model_enc, xe.as_ref())
    }
}

/// Fit `family` on `x·B` and decode the result.
pub fn encoded_mixture_fit(
    x: &DataMatrix,
    b: &FeatureEncoder,
    k: usize,
    family: Family,
    cfg: &EmConfig,
) -> Result<EncodedMixtureFit> {
    let start = Instant::now();
    let xe = encode_features(b, x.as_ref())?;
    let model_enc = match family {
        Family::FullCovariance => em_fit_gmm(&xe, k, cfg)?,
        Family::FactorAnalytic { q_factors } => em_fit_mfa(&xe, k, q_factors, cfg)?,
    };
    let bm = b.matrix();
    let decoded_means = &model_enc.means * bm.transpose();
    let decoded_covariances = model_enc
        .covariances
        .iter()
        .map(|s| bm * s * bm.transpose())
        .collect();
    let mut runtime_seconds = start.elapsed().as_secs_f64();
    if cfg.include_encoder_construction {
        runtime_seconds += b.construction_seconds();
    }
    Ok(EncodedMixtureFit {
        encoder: b.clone(),
        model_enc,
        decoded_means,
        decoded_covariances,
        runtime_seconds,
    })
}

#[derive(Serialize)]
struct MixtureModelJson {
    k: usize,
    family: &'static str,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariances: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loadings: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_diag: Option<Vec<Vec<f64>>>,
    loglik: f64,
}

impl From<&MixtureModel> for MixtureModelJson {
    fn from(m: &MixtureModel) -> Self {
        let rows = |a: &Mat<f64>| linalg::to_rows(a.as_ref());
        let (covariances, loadings, noise_diag) = match &m.factors {
            None => (Some(m.covariances.iter().map(rows).collect()), None, None),
            Some(f) => (None, Some(f.loadings.iter().map(rows).collect()), Some(f.noise_diag.clone())),
        };
        Self {
            k: m.k(),
            family: m.family().name(),
            weights: m.weights.clone(),
            means: rows(&m.means),
            covariances,
            loadings,
            noise_diag,
            loglik: m.loglik(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_component_model() -> MixtureModel {
        MixtureModel {
            weights: vec![0.5, 0.5],
            means: Mat::from_fn(2, 2, |i, j| if j == 0 { [-1.0, 1.0][i] } else { 0.0 }),
            covariances: vec![Mat::identity(2, 2), Mat::identity(2, 2)],
            factors: None,
            loglik_trace: vec![-1.0],
            n_iterations: 0,
            converged: true,
            diagnostics: EmDiagnostics::default(),
            runtime_seconds: 0.0,
        }
    }

    #[test]
    fn assignment_at_mean_and_tie() {
        let m = two_component_model();
        let x = Mat::from_fn(3, 2, |i, j| if j == 0 { [-1.0, 1.0, 0.0][i] } else { 0.0 });
        assert_eq!(cluster_assign(&m, x.as_ref()).unwrap(), vec![0, 1, 0]);
        assert!(cluster_assign(&m, Mat::<f64>::zeros(1, 3).as_ref()).is_err());
    }

    #[test]
    fn standard_normal_density() {
        let mut m = two_component_model();
        m.weights = vec![1.0];
        m.means = Mat::zeros(1, 2);
        m.covariances.truncate(1);
        let lw = m.log_weighted_densities(Mat::<f64>::zeros(1, 2).as_ref()).unwrap();
        assert!((lw[(0, 0)] + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn json_shape_full_covariance() {
        let v: serde_json::Value = serde_json::from_str(&two_component_model().to_json()).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["family"], "full-covariance");
        assert!(v.get("covariances").is_some() && v.get("loadings").is_none());
    }
}
