//! Two-component linear mixed model fitted by average-information REML.
//!
//! The model is `y ~ N(Xβ, σ_g·G + σ_e·I)`. [`reml_fit`] maximizes the
//! restricted log-likelihood
//!
//! ```text
//! ℓ_R(σ) = −½ [ log|V| + log|XᵀV⁻¹X| + yᵀPy ]
//! P      = V⁻¹ − V⁻¹X (XᵀV⁻¹X)⁻¹ XᵀV⁻¹
//! ```
//!
//! (additive constants dropped) with Newton steps whose Hessian is the
//! average-information matrix `AI_ij = ½·yᵀ P A_i P A_j P y`, `A_1 = G`,
//! `A_2 = I`. Steps are halved until they stay feasible and do not lower
//! `ℓ_R`, so the recorded likelihood trace is non-decreasing.
//!
//! [`encoded_reml_fit`] runs the same fitter on `(A·y, A·X, A·G·Aᵀ)` for a
//! [`SampleEncoder`] `A` with orthonormal rows, which keeps the residual
//! covariance at `σ_e·I_m`.

use std::time::Instant;

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, MatRef};
use serde::Serialize;

use crate::encoding::SampleEncoder;
use crate::linalg;
use crate::{Error, Result};

/// Symmetric positive semidefinite relatedness matrix.
#[derive(Debug, Clone)]
pub struct GrmMatrix {
    g: Mat<f64>,
}

impl GrmMatrix {
    /// Checks symmetry (within `1e-8`) and positive semidefiniteness
    /// (smallest eigenvalue ≥ `−1e-6·‖g‖_max`, tested by factoring the
    /// shifted matrix).
    pub fn new(g: Mat<f64>) -> Result<Self> {
        if g.nrows() != g.ncols() || g.nrows() == 0 {
            return Err(Error::dim(format!("GRM must be square, got {} × {}", g.nrows(), g.ncols())));
        }
        if !all_finite(g.as_ref()) {
            return Err(Error::input("GRM has non-finite entries"));
        }
        if !linalg::is_symmetric(g.as_ref(), 1e-8) {
            return Err(Error::input("GRM is not symmetric"));
        }
        let n = g.nrows();
        let shift = 1e-6 * linalg::max_abs(g.as_ref()).max(f64::MIN_POSITIVE);
        let shifted = Mat::from_fn(n, n, |i, j| g[(i, j)] + if i == j { shift } else { 0.0 });
        if shifted.llt(faer::Side::Lower).is_err() {
            return Err(Error::input("GRM is not positive semidefinite"));
        }
        Ok(Self { g })
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.g.as_ref()
    }

    pub fn n_samples(&self) -> usize {
        self.g.nrows()
    }
}

fn all_finite(a: MatRef<'_, f64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].is_finite()))
}

/// Response, fixed-effect design and relatedness for one fit.
#[derive(Debug, Clone)]
pub struct LmmInputs {
    y: Vec<f64>,
    x: Mat<f64>,
    g: GrmMatrix,
}

impl LmmInputs {
    pub fn new(y: Vec<f64>, x: Mat<f64>, g: GrmMatrix) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || g.n_samples() != n {
            return Err(Error::dim(format!(
                "y has {n} entries, X has {} rows, G is {} × {}",
                x.nrows(),
                g.n_samples(),
                g.n_samples()
            )));
        }
        let q = x.ncols();
        if q == 0 || q >= n {
            return Err(Error::input(format!("design must have 1 ≤ q < n columns, got q = {q}, n = {n}")));
        }
        if !y.iter().all(|v| v.is_finite()) || !all_finite(x.as_ref()) {
            return Err(Error::input("non-finite entries in y or X"));
        }
        let svd = x
            .thin_svd()
            .map_err(|e| Error::Estimation(format!("SVD of design failed: {e:?}")))?;
        let s = svd.S();
        let (smax, smin) = (0..s.dim()).fold((0.0f64, f64::INFINITY), |(hi, lo), i| {
            (hi.max(s[i]), lo.min(s[i]))
        });
        if smax == 0.0 || smin <= 1e-10 * smax {
            return Err(Error::input("design matrix is not of full column rank"));
        }
        Ok(Self { y, x, g })
    }

    /// Design consisting of a single intercept column.
    pub fn with_intercept(y: Vec<f64>, g: GrmMatrix) -> Result<Self> {
        let x = Mat::from_fn(y.len(), 1, |_, _| 1.0);
        Self::new(y, x, g)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> MatRef<'_, f64> {
        self.x.as_ref()
    }

    pub fn grm(&self) -> &GrmMatrix {
        &self.g
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }
}

/// Genetic and residual variance components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub sigma_g: f64,
    pub sigma_e: f64,
}

impl VarianceComponents {
    pub fn new(sigma_g: f64, sigma_e: f64) -> Result<Self> {
        if !(sigma_g.is_finite() && sigma_e.is_finite()) || sigma_g < 0.0 || sigma_e < 0.0 {
            return Err(Error::input(format!("invalid variance components ({sigma_g}, {sigma_e})")));
        }
        Ok(Self { sigma_g, sigma_e })
    }

    /// `σ_g / (σ_g + σ_e)`, or zero when both sit at or below `floor`.
    pub fn heritability(&self, floor: f64) -> f64 {
        if self.sigma_g <= floor && self.sigma_e <= floor {
            return 0.0;
        }
        (self.sigma_g / (self.sigma_g + self.sigma_e)).clamp(0.0, 1.0)
    }

    fn as_array(&self) -> [f64; 2] {
        [self.sigma_g, self.sigma_e]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Convergence when `max |score| ≤ rel_tolerance · (1 + |ℓ_R|)`.
    pub rel_tolerance: f64,
    pub variance_floor: f64,
    /// Add the encoder's own construction time to an encoded fit's runtime.
    pub include_encoder_construction: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            rel_tolerance: 1e-6,
            variance_floor: 1e-8,
            include_encoder_construction: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmmFit {
    pub vc: VarianceComponents,
    pub beta_fixed: Vec<f64>,
    pub h2: f64,
    pub reml_loglik: f64,
    pub n_iterations: usize,
    pub converged: bool,
    pub runtime_seconds: f64,
    /// `ℓ_R` at the start point and after every accepted step.
    pub loglik_trace: Vec<f64>,
    /// Score at the returned components.
    pub score: [f64; 2],
}

/// Flat JSON shape of a fit result.
#[derive(Debug, Serialize)]
pub struct LmmFitReport {
    pub sigma_g: f64,
    pub sigma_e: f64,
    pub h2: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_seconds: f64,
}

impl LmmFit {
    pub fn report(&self) -> LmmFitReport {
        LmmFitReport {
            sigma_g: self.vc.sigma_g,
            sigma_e: self.vc.sigma_e,
            h2: self.h2,
            loglik: self.reml_loglik,
            iterations: self.n_iterations,
            converged: self.converged,
            runtime_seconds: self.runtime_seconds,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.report()).expect("plain struct serializes")
    }
}

/// `σ_g / (σ_g + σ_e)` of a fit, zero when both components sit at the
/// default floor.
pub fn heritability(fit: &LmmFit) -> f64 {
    fit.vc.heritability(FitConfig::default().variance_floor)
}

/// Cholesky of `V` plus the solves every likelihood evaluation needs.
struct Factored {
    llt: Llt<f64>,
    /// `V⁻¹X`, n × q.
    vinv_x: Mat<f64>,
    /// `V⁻¹y`, n × 1.
    vinv_y: Mat<f64>,
    /// `XᵀV⁻¹X`, factored.
    c_llt: Llt<f64>,
    loglik: f64,
}

fn factor(inputs: &LmmInputs, vc: VarianceComponents) -> Result<Factored> {
    linalg::single_threaded();
    let n = inputs.n_samples();
    let g = inputs.g.matrix();
    let v = Mat::from_fn(n, n, |i, j| {
        vc.sigma_g * g[(i, j)] + if i == j { vc.sigma_e } else { 0.0 }
    });
    let llt = linalg::spd_factor(v.as_ref())
        .map_err(|_| Error::Estimation(format!("V is singular at σ = ({}, {})", vc.sigma_g, vc.sigma_e)))?;
    let logdet_v = linalg::llt_log_det(&llt);
    let x = inputs.x.as_ref();
    let y = linalg::column(&inputs.y);
    let vinv_x = llt.solve(x);
    let vinv_y = llt.solve(y.as_ref());
    let c = x.transpose() * &vinv_x;
    let c_llt = linalg::spd_factor(linalg::symmetrize(c.as_ref()).as_ref())
        .map_err(|_| Error::Estimation("XᵀV⁻¹X is singular".into()))?;
    let logdet_c = linalg::llt_log_det(&c_llt);
    let xt_vinv_y = x.transpose() * &vinv_y;
    let yt_vinv_y = dot(y.as_ref(), vinv_y.as_ref());
    let proj = c_llt.solve(xt_vinv_y.as_ref());
    let ypy = yt_vinv_y - dot(xt_vinv_y.as_ref(), proj.as_ref());
    let loglik = -0.5 * (logdet_v + logdet_c + ypy);
    if !loglik.is_finite() {
        return Err(Error::Estimation("non-finite restricted log-likelihood".into()));
    }
    Ok(Factored { llt, vinv_x, vinv_y, c_llt, loglik })
}

fn dot(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    (0..a.nrows()).map(|i| a[(i, 0)] * b[(i, 0)]).sum()
}

/// Restricted log-likelihood `ℓ_R` at the given components.
pub fn reml_loglik(inputs: &LmmInputs, vc: VarianceComponents) -> Result<f64> {
    Ok(factor(inputs, vc)?.loglik)
}

/// `ℓ_R`, its gradient and the average-information matrix at one point.
#[derive(Debug, Clone, Copy)]
pub struct RemlDerivatives {
    pub loglik: f64,
    /// `∂ℓ_R/∂σ_g`, `∂ℓ_R/∂σ_e`.
    pub score: [f64; 2],
    pub ai: [[f64; 2]; 2],
}

/// Score and average information of `ℓ_R`.
pub fn reml_derivatives(inputs: &LmmInputs, vc: VarianceComponents) -> Result<RemlDerivatives> {
    let f = factor(inputs, vc)?;
    Ok(derivatives(inputs, &f))
}

fn derivatives(inputs: &LmmInputs, f: &Factored) -> RemlDerivatives {
    let n = inputs.n_samples();
    let g = inputs.g.matrix();
    let vinv = f.llt.inverse();
    // P = V⁻¹ − V⁻¹X C⁻¹ XᵀV⁻¹
    let c_inv_xt_vinv = f.c_llt.solve(f.vinv_x.transpose());
    let mut p = vinv;
    p -= &f.vinv_x * &c_inv_xt_vinv;
    let xt_vinv_y = inputs.x.transpose() * &f.vinv_y;
    let py = &f.vinv_y - &f.vinv_x * f.c_llt.solve(xt_vinv_y.as_ref());

    let mut tr_pg = 0.0;
    let mut tr_p = 0.0;
    for j in 0..n {
        tr_p += p[(j, j)];
        for i in 0..n {
            tr_pg += p[(i, j)] * g[(i, j)];
        }
    }
    let gpy = g * &py;
    let p_gpy = &p * &gpy;
    let p_py = &p * &py;
    let ypgpy = dot(py.as_ref(), gpy.as_ref());
    let yppy = dot(py.as_ref(), py.as_ref());

    let score = [-0.5 * (tr_pg - ypgpy), -0.5 * (tr_p - yppy)];
    let ai_gg = 0.5 * dot(gpy.as_ref(), p_gpy.as_ref());
    let ai_ge = 0.5 * dot(gpy.as_ref(), p_py.as_ref());
    let ai_ee = 0.5 * dot(py.as_ref(), p_py.as_ref());
    RemlDerivatives { loglik: f.loglik, score, ai: [[ai_gg, ai_ge], [ai_ge, ai_ee]] }
}

/// Newton direction restricted to the free components. Falls back to a
/// ridge when the information matrix is (near) singular, e.g. `G = I`.
fn newton_direction(ai: [[f64; 2]; 2], score: [f64; 2], free: [bool; 2]) -> [f64; 2] {
    match free {
        [true, true] => {
            let tr = ai[0][0] + ai[1][1];
            let mut a = ai;
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() <= 1e-10 * tr * tr {
                let ridge = 1e-8 * tr;
                a[0][0] += ridge;
                a[1][1] += ridge;
            }
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            [
                (a[1][1] * score[0] - a[0][1] * score[1]) / det,
                (a[0][0] * score[1] - a[1][0] * score[0]) / det,
            ]
        }
        [true, false] => [score[0] / ai[0][0], 0.0],
        [false, true] => [0.0, score[1] / ai[1][1]],
        [false, false] => [0.0, 0.0],
    }
}

const MAX_HALVINGS: usize = 40;

/// AI-REML fit of `y ~ N(Xβ, σ_g·G + σ_e·I)`.
pub fn reml_fit(inputs: &LmmInputs, cfg: &FitConfig) -> Result<LmmFit> {
    linalg::single_threaded();
    let start = Instant::now();
    let floor = cfg.variance_floor;
    let n = inputs.n_samples();
    let mean = inputs.y.iter().sum::<f64>() / n as f64;
    let var_y = inputs.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
    let init = (0.5 * var_y).max(floor);
    let mut vc = VarianceComponents { sigma_g: init, sigma_e: init };

    let mut fac = factor(inputs, vc)?;
    let mut d = derivatives(inputs, &fac);
    let mut trace = vec![d.loglik];
    let mut converged = false;
    let mut iterations = 0;

    loop {
        // A component pinned at its floor with an outward score is held fixed.
        let comps = vc.as_array();
        let free = [0, 1].map(|i| comps[i] > floor || d.score[i] > 0.0);
        let proj = [0, 1].map(|i| if free[i] { d.score[i] } else { 0.0 });
        let tol = cfg.rel_tolerance * (1.0 + d.loglik.abs());
        if proj[0].abs().max(proj[1].abs()) <= tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }
        let delta = newton_direction(d.ai, d.score, free);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand = VarianceComponents {
                sigma_g: (vc.sigma_g + step * delta[0]).max(floor),
                sigma_e: (vc.sigma_e + step * delta[1]).max(floor),
            };
            if cand == vc {
                break;
            }
            if let Ok(f) = factor(inputs, cand) {
                if f.loglik >= d.loglik {
                    accepted = Some((cand, f));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, f)) = accepted else {
            // no ascent direction left at machine precision
            break;
        };
        vc = cand;
        fac = f;
        d = derivatives(inputs, &fac);
        trace.push(d.loglik);
        iterations += 1;
    }

    let xt_vinv_y = inputs.x.transpose() * &fac.vinv_y;
    let beta = fac.c_llt.solve(xt_vinv_y.as_ref());
    let beta_fixed = (0..beta.nrows()).map(|i| beta[(i, 0)]).collect();
    Ok(LmmFit {
        vc,
        beta_fixed,
        h2: vc.heritability(floor),
        reml_loglik: d.loglik,
        n_iterations: iterations,
        converged,
        runtime_seconds: start.elapsed().as_secs_f64(),
        loglik_trace: trace,
        score: d.score,
    })
}

/// Encode `(y, X, G)` with `a` and fit the encoded model.
///
/// `runtime_seconds` covers encoding plus fitting, and also the encoder's
/// construction time when `cfg.include_encoder_construction` is set.
pub fn encoded_reml_fit(inputs: &LmmInputs, a: &SampleEncoder, cfg: &FitConfig) -> Result<LmmFit> {
    let start = Instant::now();
    let encoded = encode_inputs(inputs, a)?;
    let mut fit = reml_fit(&encoded, cfg)?;
    fit.runtime_seconds = start.elapsed().as_secs_f64();
    if cfg.include_encoder_construction {
        fit.runtime_seconds += a.construction_seconds();
    }
    Ok(fit)
}

/// `(A·y, A·X, A·G·Aᵀ)`.
pub fn encode_inputs(inputs: &LmmInputs, a: &SampleEncoder) -> Result<LmmInputs> {
    let n = inputs.n_samples();
    if a.source_rank() != n {
        return Err(Error::dim(format!("encoder consumes {} samples, inputs have {n}", a.source_rank())));
    }
    let m = a.target_rank();
    let q = inputs.n_fixed();
    if m < q + 2 {
        return Err(Error::Identifiability(format!(
            "encoded sample count m = {m} must be at least q + 2 = {}",
            q + 2
        )));
    }
    let am = a.matrix();
    let y = am * linalg::column(&inputs.y);
    let x = am * inputs.x();
    let ag = am * inputs.g.matrix();
    let gm = linalg::symmetrize((&ag * am.transpose()).as_ref());
    let y = (0..m).map(|i| y[(i, 0)]).collect();
    LmmInputs::new(y, x, GrmMatrix::new(gm)?).map_err(|e| match e {
        Error::Input(msg) => Error::Identifiability(format!("encoded inputs: {msg}")),
        other => other,
    })
}
