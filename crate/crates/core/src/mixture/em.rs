use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{log_sum_exp_row, log_weighted_densities, EmConfig, EmDiagnostics, FactorParams, MixtureModel};
use crate::linalg;
use crate::{DataMatrix, Error, Result};

/// Lower bound on every factor-analytic noise variance.
const NOISE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy)]
enum CovModel {
    Full { ridge: f64 },
    Factor { q: usize },
}

#[derive(Clone)]
struct Params {
    weights: Vec<f64>,
    means: Mat<f64>,
    covs: Vec<Mat<f64>>,
    factors: Option<FactorParams>,
}

/// Full-covariance Gaussian mixture by EM.
pub fn em_fit_gmm(x: &DataMatrix, k: usize, cfg: &EmConfig) -> Result<MixtureModel> {
    validate(x, k)?;
    let pooled = pooled_covariance(x.as_ref());
    let d = x.ncols() as f64;
    let ridge = cfg.ridge_scale * (linalg::trace(pooled.as_ref()) / d).max(f64::EPSILON);
    fit(x.as_ref(), k, CovModel::Full { ridge }, &pooled, cfg)
}

/// Mixture of factor analyzers, `Σ_i = Λ_iΛ_iᵀ + D_i` with `q_factors`
/// latent factors per component.
pub fn em_fit_mfa(x: &DataMatrix, k: usize, q_factors: usize, cfg: &EmConfig) -> Result<MixtureModel> {
    validate(x, k)?;
    if q_factors == 0 || q_factors >= x.ncols() {
        return Err(Error::input(format!(
            "q_factors = {q_factors} must lie in 1..{}",
            x.ncols()
        )));
    }
    let pooled = pooled_covariance(x.as_ref());
    fit(x.as_ref(), k, CovModel::Factor { q: q_factors }, &pooled, cfg)
}

fn validate(x: &DataMatrix, k: usize) -> Result<()> {
    if x.ncols() == 0 {
        return Err(Error::input("data has no columns"));
    }
    if k == 0 || k >= x.nrows() {
        return Err(Error::input(format!("need 1 ≤ k < n, got k = {k}, n = {}", x.nrows())));
    }
    Ok(())
}

/// Maximum-likelihood covariance (denominator n).
fn pooled_covariance(x: MatRef<'_, f64>) -> Mat<f64> {
    let c = linalg::center_columns(x);
    let s = c.transpose() * &c * (1.0 / x.nrows() as f64);
    linalg::symmetrize(s.as_ref())
}

fn fit(x: MatRef<'_, f64>, k: usize, model: CovModel, pooled: &Mat<f64>, cfg: &EmConfig) -> Result<MixtureModel> {
    linalg::single_threaded();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<MixtureModel> = None;
    for _ in 0..cfg.n_restarts.max(1) {
        let init = initialize(x, k, model, pooled, &mut rng)?;
        let fitted = run_em(x, init, model, pooled, cfg)?;
        if best.as_ref().is_none_or(|b| fitted.loglik() > b.loglik()) {
            best = Some(fitted);
        }
    }
    let mut best = best.expect("at least one restart");
    best.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(best)
}

fn run_em(x: MatRef<'_, f64>, mut params: Params, model: CovModel, pooled: &Mat<f64>, cfg: &EmConfig) -> Result<MixtureModel> {
    let (n, k) = (x.nrows(), params.weights.len());
    let mut trace: Vec<f64> = Vec::new();
    let mut diag = EmDiagnostics::default();
    let mut previous: Option<Params> = None;
    let mut reseeded_last = false;
    let mut iterations = 0;
    let mut converged = false;
    let mut resp = Mat::<f64>::zeros(n, k);

    loop {
        let chols = params
            .covs
            .iter()
            .map(|c| linalg::spd_factor(c.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let lw = log_weighted_densities(x, &params.weights, params.means.as_ref(), &chols);
        let mut ll = 0.0;
        for j in 0..n {
            let lse = log_sum_exp_row(lw.as_ref(), j);
            ll += lse;
            let mut row_sum = 0.0;
            for i in 0..k {
                let t = (lw[(j, i)] - lse).exp();
                resp[(j, i)] = t;
                row_sum += t;
            }
            diag.max_responsibility_error = diag.max_responsibility_error.max((row_sum - 1.0).abs());
        }
        if !ll.is_finite() {
            return Err(Error::Estimation("non-finite mixture log-likelihood".into()));
        }
        if let Some(&prev) = trace.last() {
            let change = ll - prev;
            if !reseeded_last && change < 0.0 {
                params = previous.take().expect("a step was taken");
                diag.rejected_steps += 1;
                iterations -= 1;
                converged = true;
                break;
            }
            if !reseeded_last {
                diag.min_loglik_change = diag.min_loglik_change.min(change);
            }
            converged = !reseeded_last && change.abs() / n as f64 <= cfg.rel_tolerance;
        }
        trace.push(ll);
        if converged || iterations >= cfg.max_iterations {
            break;
        }
        previous = Some(params.clone());
        reseeded_last = m_step(x, resp.as_ref(), &mut params, model, pooled)?;
        if reseeded_last {
            diag.reseeds += 1;
        }
        iterations += 1;
    }

    Ok(MixtureModel {
        weights: params.weights,
        means: params.means,
        covariances: params.covs,
        factors: params.factors,
        loglik_trace: trace,
        n_iterations: iterations,
        converged,
        diagnostics: diag,
        runtime_seconds: 0.0,
    })
}

/// Returns whether an empty component had to be re-seeded.
fn m_step(x: MatRef<'_, f64>, resp: MatRef<'_, f64>, p: &mut Params, model: CovModel, pooled: &Mat<f64>) -> Result<bool> {
    let (n, d) = (x.nrows(), x.ncols());
    let k = p.weights.len();
    let mut reseeded = Vec::new();
    let mut taken: Vec<usize> = Vec::new();
    for c in 0..k {
        let mass: f64 = (0..n).map(|j| resp[(j, c)]).sum();
        if mass < 1e-10 * n as f64 {
            // least confidently assigned point not already used
            let j_star = (0..n)
                .filter(|j| !taken.contains(j))
                .min_by(|&a, &b| row_max(resp, a).total_cmp(&row_max(resp, b)))
                .expect("n > k");
            taken.push(j_star);
            for a in 0..d {
                p.means[(c, a)] = x[(j_star, a)];
            }
            match model {
                CovModel::Full { ridge } => p.covs[c] = with_ridge(pooled, ridge),
                CovModel::Factor { q } => {
                    let (l, dn) = ppca_init(pooled, q)?;
                    p.covs[c] = factor_covariance(&l, &dn);
                    let f = p.factors.as_mut().expect("factor model");
                    f.loadings[c] = l;
                    f.noise_diag[c] = dn;
                }
            }
            reseeded.push(c);
            continue;
        }
        p.weights[c] = mass / n as f64;
        for a in 0..d {
            p.means[(c, a)] = (0..n).map(|j| resp[(j, c)] * x[(j, a)]).sum::<f64>() / mass;
        }
        let w = Mat::from_fn(n, d, |j, a| resp[(j, c)].sqrt() * (x[(j, a)] - p.means[(c, a)]));
        let s = linalg::symmetrize((w.transpose() * &w * (1.0 / mass)).as_ref());
        match model {
            CovModel::Full { ridge } => p.covs[c] = with_ridge(&s, ridge),
            CovModel::Factor { .. } => {
                let f = p.factors.as_mut().expect("factor model");
                let (l, dn) = fa_step(&s, &f.loadings[c], &f.noise_diag[c])?;
                p.covs[c] = factor_covariance(&l, &dn);
                f.loadings[c] = l;
                f.noise_diag[c] = dn;
            }
        }
    }
    if !reseeded.is_empty() {
        for &c in &reseeded {
            p.weights[c] = 1.0 / k as f64;
        }
        let total: f64 = p.weights.iter().sum();
        p.weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(!reseeded.is_empty())
}

fn row_max(m: MatRef<'_, f64>, j: usize) -> f64 {
    (0..m.ncols()).map(|i| m[(j, i)]).fold(f64::NEG_INFINITY, f64::max)
}

fn with_ridge(s: &Mat<f64>, ridge: f64) -> Mat<f64> {
    let d = s.nrows();
    Mat::from_fn(d, d, |i, j| s[(i, j)] + if i == j { ridge } else { 0.0 })
}

fn factor_covariance(l: &Mat<f64>, noise: &[f64]) -> Mat<f64> {
    let mut c = l * l.transpose();
    for (i, v) in noise.iter().enumerate() {
        c[(i, i)] += v;
    }
    linalg::symmetrize(c.as_ref())
}

/// One EM step of a single factor analyzer against the weighted sample
/// covariance `s`.
fn fa_step(s: &Mat<f64>, l: &Mat<f64>, noise: &[f64]) -> Result<(Mat<f64>, Vec<f64>)> {
    let (d, q) = (l.nrows(), l.ncols());
    let sigma = factor_covariance(l, noise);
    let llt = linalg::spd_factor(sigma.as_ref())?;
    // β = Λᵀ Σ⁻¹
    let beta = llt.solve(l.as_ref()).transpose().to_owned();
    let s_bt = s * beta.transpose();
    let mut ezz = &beta * &s_bt - &beta * l;
    for a in 0..q {
        ezz[(a, a)] += 1.0;
    }
    let ezz_llt = linalg::spd_factor(linalg::symmetrize(ezz.as_ref()).as_ref())?;
    let l_new = ezz_llt.solve(s_bt.transpose()).transpose().to_owned();
    let noise_new = (0..d)
        .map(|i| {
            let explained: f64 = (0..q).map(|a| l_new[(i, a)] * s_bt[(i, a)]).sum();
            (s[(i, i)] - explained).max(NOISE_FLOOR)
        })
        .collect();
    Ok((l_new, noise_new))
}

/// Probabilistic-PCA start: top-`q` principal directions scaled by the
/// excess of their eigenvalue over the mean discarded eigenvalue.
fn ppca_init(s: &Mat<f64>, q: usize) -> Result<(Mat<f64>, Vec<f64>)> {
    let d = s.nrows();
    let (vals, vecs) = linalg::sym_eigen_desc(s.as_ref())?;
    let sigma2 = vals[q..].iter().sum::<f64>() / (d - q) as f64;
    let l = Mat::from_fn(d, q, |i, a| {
        let scale = (vals[a] - sigma2).max(1e-3 * vals[a].abs().max(1e-12)).sqrt();
        vecs[(i, a)] * scale
    });
    let noise = (0..d)
        .map(|i| {
            let explained: f64 = (0..q).map(|a| l[(i, a)].powi(2)).sum();
            (s[(i, i)] - explained).max(NOISE_FLOOR)
        })
        .collect();
    Ok((l, noise))
}

fn sq_dist(x: MatRef<'_, f64>, a: usize, b: usize) -> f64 {
    (0..x.ncols()).map(|c| (x[(a, c)] - x[(b, c)]).powi(2)).sum()
}

/// D²-weighted choice of `k` distinct row indices.
fn kmeans_pp(x: MatRef<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let first = rng.random_range(0..n);
    let mut centers = vec![first];
    let mut dist: Vec<f64> = (0..n).map(|j| sq_dist(x, j, first)).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (j, &w) in dist.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(j);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total")
        } else {
            // every point coincides with a centre
            (0..n).find(|j| !centers.contains(j)).expect("k < n")
        };
        centers.push(next);
        for (j, dj) in dist.iter_mut().enumerate() {
            *dj = dj.min(sq_dist(x, j, next));
        }
    }
    centers
}

fn initialize(x: MatRef<'_, f64>, k: usize, model: CovModel, pooled: &Mat<f64>, rng: &mut ChaCha8Rng) -> Result<Params> {
    let (n, d) = (x.nrows(), x.ncols());
    let centers = kmeans_pp(x, k, rng);
    let assign: Vec<usize> = (0..n)
        .map(|j| {
            let mut best = 0;
            let mut best_d = sq_dist(x, j, centers[0]);
            for (c, &cj) in centers.iter().enumerate().skip(1) {
                let dd = sq_dist(x, j, cj);
                if dd < best_d {
                    best = c;
                    best_d = dd;
                }
            }
            best
        })
        .collect();

    let mut weights = vec![0.0; k];
    let mut means = Mat::<f64>::zeros(k, d);
    let mut covs = Vec::with_capacity(k);
    let mut loadings = Vec::new();
    let mut noise_diag = Vec::new();
    for c in 0..k {
        let members: Vec<usize> = (0..n).filter(|&j| assign[j] == c).collect();
        weights[c] = members.len().max(1) as f64;
        let s = if members.is_empty() {
            for a in 0..d {
                means[(c, a)] = x[(centers[c], a)];
            }
            pooled.clone()
        } else {
            let m = members.len() as f64;
            for a in 0..d {
                means[(c, a)] = members.iter().map(|&j| x[(j, a)]).sum::<f64>() / m;
            }
            if members.len() > d {
                let w = Mat::from_fn(members.len(), d, |r, a| x[(members[r], a)] - means[(c, a)]);
                linalg::symmetrize((w.transpose() * &w * (1.0 / m)).as_ref())
            } else {
                pooled.clone()
            }
        };
        match model {
            CovModel::Full { ridge } => covs.push(with_ridge(&s, ridge)),
            CovModel::Factor { q } => {
                let (l, dn) = ppca_init(&s, q)?;
                covs.push(factor_covariance(&l, &dn));
                loadings.push(l);
                noise_diag.push(dn);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let factors = matches!(model, CovModel::Factor { .. }).then_some(FactorParams { loadings, noise_diag });
    Ok(Params { weights, means, covs, factors })
}
