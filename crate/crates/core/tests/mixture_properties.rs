mod common;

use common::{mean, permutations};
use encinfo::data::{clustering_accuracy, load_olive_oil};
use encinfo::encoding::{fit_feature_encoder, FeatureEncoder};
use encinfo::mixture::{
    cluster_assign, em_fit_gmm, em_fit_mfa, encoded_mixture_fit, EmConfig, EmDiagnostics, Family, MixtureModel,
};
use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n_per` unit-variance points around each centre, rows interleaved.
fn blobs(centres: &[[f64; 2]], n_per: usize, seed: u64) -> (Mat<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = centres.len() * n_per;
    let mut x = Mat::<f64>::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % centres.len();
        x[(i, 0)] = centres[c][0] + normal(&mut rng);
        x[(i, 1)] = centres[c][1] + normal(&mut rng);
        labels.push(c);
    }
    (x, labels)
}

fn frobenius(a: &Mat<f64>) -> f64 {
    a.squared_norm_l2().sqrt()
}

fn sample_covariance(x: &Mat<f64>) -> Mat<f64> {
    let n = x.nrows() as f64;
    let means: Vec<f64> = (0..x.ncols()).map(|j| (0..x.nrows()).map(|i| x[(i, j)]).sum::<f64>() / n).collect();
    let c = Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - means[j]);
    c.transpose() * &c * (1.0 / n)
}

#[test]
fn separated_blobs_recover_centres() {
    let centres = [[-5.0, 0.0], [5.0, 0.0]];
    let (x, truth) = blobs(&centres, 100, 3);
    let model = em_fit_gmm(&x, 2, &EmConfig::default()).unwrap();
    let labels = cluster_assign(&model, x.as_ref()).unwrap();
    assert_eq!(clustering_accuracy(&labels, &truth).unwrap(), 1.0);
    for c in centres {
        let closest = (0..2)
            .map(|i| ((model.means[(i, 0)] - c[0]).powi(2) + (model.means[(i, 1)] - c[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(closest <= 0.5, "centre {c:?} missed by {closest}");
    }
}

#[test]
fn near_saturated_factor_model_matches_sample_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mix = Mat::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.3 * (i as f64 - j as f64) });
    let z = Mat::from_fn(500, 4, |_, _| normal(&mut rng));
    let x = &z * mix.transpose();
    let model = em_fit_mfa(&x, 1, 3, &EmConfig::default()).unwrap();
    let s = sample_covariance(&x);
    let rel = frobenius(&(&model.covariances[0] - &s)) / frobenius(&s);
    assert!(rel <= 0.1, "relative error {rel}");
}

#[test]
fn single_factor_generative_model_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mu = [1.0, -2.0, 0.5, 3.0, 0.0];
    let lambda = [0.9, -0.6, 0.5, 0.0, 0.7];
    let psi: [f64; 5] = [0.2, 0.3, 0.1, 0.4, 0.25];
    // the sample covariance itself is ~0.05 from the truth at this n
    let n = 20_000;
    let mut x = Mat::<f64>::zeros(n, 5);
    for i in 0..n {
        let f = normal(&mut rng);
        for j in 0..5 {
            x[(i, j)] = mu[j] + lambda[j] * f + psi[j].sqrt() * normal(&mut rng);
        }
    }
    let model = em_fit_mfa(&x, 1, 1, &EmConfig::default()).unwrap();
    let truth = Mat::from_fn(5, 5, |a, b| lambda[a] * lambda[b] + if a == b { psi[a] } else { 0.0 });
    let factors = model.factors.as_ref().unwrap();
    let l = &factors.loadings[0];
    let rebuilt = Mat::from_fn(5, 5, |a, b| l[(a, 0)] * l[(b, 0)] + if a == b { factors.noise_diag[0][a] } else { 0.0 });
    let err = frobenius(&(&rebuilt - &truth));
    assert!(err <= 0.1, "Frobenius error {err}");
    assert!(frobenius(&(&rebuilt - &model.covariances[0])) <= 1e-8);
}

#[test]
fn full_rank_orthogonal_encoding_preserves_likelihood() {
    let olive = load_olive_oil(true).unwrap();
    let b = fit_feature_encoder(&olive.x, 8).unwrap();
    for seed in [0, 1, 2] {
        let cfg = EmConfig { seed, n_restarts: 1, ..Default::default() };
        let raw = em_fit_gmm(&olive.x, 3, &cfg).unwrap();
        let enc = encoded_mixture_fit(&olive.x, &b, 3, Family::FullCovariance, &cfg).unwrap();
        assert!(
            (raw.loglik() - enc.model_enc.loglik()).abs() <= 1e-6 * (1.0 + raw.loglik().abs()),
            "seed {seed}: {} vs {}",
            raw.loglik(),
            enc.model_enc.loglik()
        );
    }
}

#[test]
fn embedded_plane_is_found_by_two_dimensional_encoding() {
    let (plane, truth) = blobs(&[[-5.0, 0.0], [5.0, 0.0]], 150, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let q = Mat::from_fn(10, 10, |_, _| normal(&mut rng)).qr().compute_Q();
    let embed = q.subcols(0, 2);
    let mut x = &plane * embed.transpose();
    for i in 0..x.nrows() {
        for j in 0..10 {
            x[(i, j)] += 1e-3 * normal(&mut rng);
        }
    }
    let b = fit_feature_encoder(&x, 2).unwrap();
    let fit = encoded_mixture_fit(&x, &b, 2, Family::FullCovariance, &EmConfig::default()).unwrap();
    let acc = clustering_accuracy(&fit.assign(x.as_ref()).unwrap(), &truth).unwrap();
    assert!(acc >= 0.99, "accuracy {acc}");
}

/// Log density of `N(μ, S)` restricted to the range of a singular `S`,
/// via pseudo-inverse and pseudo-determinant.
fn degenerate_log_density(x: &[f64], mu: &[f64], s: &Mat<f64>, rank: usize) -> f64 {
    let evd = s.self_adjoint_eigen(Side::Lower).unwrap();
    let (u, vals) = (evd.U(), evd.S());
    let p = x.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut quad = 0.0;
    let mut log_pdet = 0.0;
    for &k in order.iter().take(rank) {
        let proj: f64 = (0..p).map(|i| u[(i, k)] * (x[i] - mu[i])).sum();
        quad += proj * proj / vals[k];
        log_pdet += vals[k].ln();
    }
    -0.5 * (rank as f64 * (2.0 * std::f64::consts::PI).ln() + log_pdet + quad)
}

#[test]
fn decoded_model_density_ratios_match_encoded_model() {
    let olive = load_olive_oil(true).unwrap();
    let r = 3;
    let b = fit_feature_encoder(&olive.x, r).unwrap();
    let fit = encoded_mixture_fit(&olive.x, &b, 3, Family::FullCovariance, &EmConfig { seed: 5, ..Default::default() }).unwrap();
    let rows: Vec<usize> = (0..olive.x.nrows()).step_by(37).collect();
    let projected = &olive.x * b.projector();
    let encoded = &olive.x * b.matrix();
    let lw = fit.model_enc.log_weighted_densities(encoded.as_ref()).unwrap();

    let mut decoded = Vec::new();
    let mut reference = Vec::new();
    for &j in &rows {
        for c in 0..3 {
            let xj: Vec<f64> = (0..8).map(|a| projected[(j, a)]).collect();
            let mu: Vec<f64> = (0..8).map(|a| fit.decoded_means[(c, a)]).collect();
            let dens = fit.model_enc.weights[c].ln() + degenerate_log_density(&xj, &mu, &fit.decoded_covariances[c], r);
            decoded.push(dens);
            reference.push(lw[(j, c)]);
        }
    }
    for a in 0..decoded.len() {
        for b2 in 0..decoded.len() {
            let lhs = decoded[a] - decoded[b2];
            let rhs = reference[a] - reference[b2];
            assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "pair ({a}, {b2}): {lhs} vs {rhs}");
        }
    }

    let means = &fit.model_enc.means * b.matrix().transpose();
    assert!(frobenius(&(&means - &fit.decoded_means)) <= 1e-10);
}

fn spherical_model(means: Mat<f64>) -> MixtureModel {
    let (k, d) = (means.nrows(), means.ncols());
    MixtureModel {
        weights: vec![1.0 / k as f64; k],
        means,
        covariances: vec![Mat::<f64>::identity(d, d) * 0.7; k],
        factors: None,
        loglik_trace: vec![],
        n_iterations: 0,
        converged: true,
        diagnostics: EmDiagnostics::default(),
        runtime_seconds: 0.0,
    }
}

#[test]
fn equal_spherical_components_assign_to_nearest_centre() {
    let (x, _) = blobs(&[[-3.0, 0.0], [3.0, 1.0], [0.0, 4.0]], 60, 9);
    let centres = Mat::from_fn(3, 2, |i, j| [[-3.0, 0.0], [3.0, 1.0], [0.0, 4.0]][i][j]);
    let labels = cluster_assign(&spherical_model(centres.clone()), x.as_ref()).unwrap();
    for (i, &l) in labels.iter().enumerate() {
        let dist = |c: usize| (0..2).map(|a| (x[(i, a)] - centres[(c, a)]).powi(2)).sum::<f64>();
        let nearest = (0..3).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
        assert_eq!(l, nearest);
    }
}

#[test]
fn em_fits_stay_monotone_and_normalized() {
    let olive = load_olive_oil(true).unwrap();
    for seed in 0..10 {
        let cfg = EmConfig { seed, n_restarts: 1, ..Default::default() };
        for model in [
            em_fit_gmm(&olive.x, 3, &cfg).unwrap(),
            em_fit_mfa(&olive.x, 3, 2, &cfg).unwrap(),
            encoded_mixture_fit(&olive.x, &fit_feature_encoder(&olive.x, 2).unwrap(), 3, Family::FullCovariance, &cfg)
                .unwrap()
                .model_enc,
        ] {
            assert!(model.diagnostics.min_loglik_change >= -1e-8);
            assert!(model.diagnostics.max_responsibility_error <= 1e-12);
            assert!((model.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            assert!(model.weights.iter().all(|&w| w >= 0.0));
            for c in &model.covariances {
                assert!(c.llt(Side::Lower).is_ok());
            }
        }
    }
}

#[test]
fn relabeled_predictions_score_the_same() {
    let olive = load_olive_oil(true).unwrap();
    let model = em_fit_gmm(&olive.x, 3, &EmConfig::default()).unwrap();
    let labels = cluster_assign(&model, olive.x.as_ref()).unwrap();
    let base = clustering_accuracy(&labels, &olive.labels).unwrap();
    let accs: Vec<f64> = permutations(3)
        .into_iter()
        .map(|p| clustering_accuracy(&labels.iter().map(|&l| p[l]).collect::<Vec<_>>(), &olive.labels).unwrap())
        .collect();
    assert!(accs.iter().all(|&a| a == base));
    assert_eq!(mean(&accs), base);
}

#[test]
fn supplied_encoder_round_trip_through_fit() {
    let olive = load_olive_oil(true).unwrap();
    let b = FeatureEncoder::from_matrix(Mat::from_fn(8, 2, |i, j| if i == j { 1.0 } else { 0.0 })).unwrap();
    let fit = encoded_mixture_fit(&olive.x, &b, 3, Family::FactorAnalytic { q_factors: 1 }, &EmConfig::default()).unwrap();
    assert_eq!(fit.decoded_covariances[0].nrows(), 8);
    assert_eq!(fit.model_enc.dim(), 2);
    let v: serde_json::Value = serde_json::from_str(&fit.model_enc.to_json()).unwrap();
    assert_eq!(v["family"], "factor-analytic");
    assert!(v.get("loadings").is_some() && v.get("noise_diag").is_some());
}
