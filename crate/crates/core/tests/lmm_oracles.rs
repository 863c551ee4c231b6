mod common;

use common::{grid_search, mean, SpectralReml};
use encinfo::data::{simulate_heritability_data, SimulationSpec};
use encinfo::encoding::{fit_sample_encoder, SampleEncoder};
use encinfo::lmm::{encoded_reml_fit, reml_derivatives, reml_fit, reml_loglik, FitConfig, LmmInputs, VarianceComponents};
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn simulated(n: usize, p: usize, h2: f64, seed: u64) -> LmmInputs {
    let sim = simulate_heritability_data(&SimulationSpec::new(n, p, h2, seed).unwrap()).unwrap();
    LmmInputs::with_intercept(sim.y, sim.grm).unwrap()
}

fn oracle(inputs: &LmmInputs) -> SpectralReml {
    SpectralReml::new(inputs.y(), &inputs.x().to_owned(), &inputs.grm().matrix().to_owned())
}

#[test]
fn spectral_oracle_agrees_with_dense_likelihood() {
    let inputs = simulated(20, 50, 0.5, 2);
    let o = oracle(&inputs);
    for (sg, se) in [(0.1, 0.9), (1.0, 1.0), (2.5, 0.01), (0.0, 0.7)] {
        let dense = reml_loglik(&inputs, VarianceComponents::new(sg, se).unwrap()).unwrap();
        assert!((dense - o.loglik(sg, se)).abs() < 1e-9 * (1.0 + dense.abs()), "({sg}, {se})");
    }
}

#[test]
fn matches_dense_grid_search_on_small_instance() {
    // seed 4 has its optimum well inside [0, 3]²
    let inputs = simulated(20, 50, 0.5, 4);
    let fit = reml_fit(&inputs, &FitConfig::default()).unwrap();
    let best = grid_search(&oracle(&inputs), 3.0, 0.001);
    assert!(best.sigma_g > 0.05 && best.sigma_e > 0.05 && best.sigma_g < 2.9 && best.sigma_e < 2.9);
    assert!((fit.h2 - best.h2()).abs() <= 2e-3, "fit {} grid {}", fit.h2, best.h2());
    assert!(fit.reml_loglik >= best.loglik - 1e-9);

    let d = reml_derivatives(&inputs, VarianceComponents::new(best.sigma_g, best.sigma_e).unwrap()).unwrap();
    assert!(d.score.iter().all(|s| s.abs() <= 1e-2), "score at grid optimum {:?}", d.score);
}

#[test]
fn null_heritability_is_estimated_near_zero() {
    let fit = reml_fit(&simulated(500, 100, 0.0, 21), &FitConfig::default()).unwrap();
    assert!(fit.h2 <= 0.15, "h2 = {}", fit.h2);
}

#[test]
fn full_heritability_is_estimated_near_one() {
    let fit = reml_fit(&simulated(500, 100, 1.0, 22), &FitConfig::default()).unwrap();
    assert!(fit.h2 >= 0.85, "h2 = {}", fit.h2);
}

#[test]
fn simulation_realizes_requested_genetic_fraction() {
    let fractions: Vec<f64> = (0..100)
        .map(|seed| {
            let sim = simulate_heritability_data(&SimulationSpec::new(1000, 100, 0.5, seed).unwrap()).unwrap();
            let var = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
            };
            var(&sim.genetic_values) / var(&sim.y)
        })
        .collect();
    let m = mean(&fractions);
    assert!((0.45..=0.55).contains(&m), "mean realized fraction {m}");
}

#[test]
fn square_rotation_reproduces_full_fit() {
    let inputs = simulated(200, 100, 0.5, 31);
    let full = reml_fit(&inputs, &FitConfig::default()).unwrap();
    let a = fit_sample_encoder(inputs.grm(), 200).unwrap();
    let enc = encoded_reml_fit(&inputs, &a, &FitConfig::default()).unwrap();
    assert!((full.h2 - enc.h2).abs() <= 1e-6);
    assert!((full.vc.sigma_g - enc.vc.sigma_g).abs() <= 1e-6 * (1.0 + full.vc.sigma_g));
    assert!((full.vc.sigma_e - enc.vc.sigma_e).abs() <= 1e-6 * (1.0 + full.vc.sigma_e));

    // any orthogonal matrix, not only the eigenbasis
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = Mat::<f64>::from_fn(200, 200, |_, _| StandardNormal.sample(&mut rng));
    let q = m.qr().compute_Q();
    let enc = encoded_reml_fit(&inputs, &SampleEncoder::from_matrix(q.transpose().to_owned()).unwrap(), &FitConfig::default()).unwrap();
    assert!((full.h2 - enc.h2).abs() <= 1e-6);
}

#[test]
fn half_encoding_stays_close_to_full_fit() {
    let inputs = simulated(200, 100, 0.5, 32);
    let full = reml_fit(&inputs, &FitConfig::default()).unwrap();
    let a = fit_sample_encoder(inputs.grm(), 100).unwrap();
    let enc = encoded_reml_fit(&inputs, &a, &FitConfig::default()).unwrap();
    assert!((full.h2 - enc.h2).abs() <= 0.25, "full {} encoded {}", full.h2, enc.h2);
}

#[test]
fn fitted_components_respect_floor_and_ratio() {
    for seed in 0..5 {
        let fit = reml_fit(&simulated(100, 30, 0.3 * seed as f64 / 2.0, seed), &FitConfig::default()).unwrap();
        assert!(fit.vc.sigma_g >= 1e-8 && fit.vc.sigma_e >= 1e-8);
        assert!((0.0..=1.0).contains(&fit.h2));
        assert_eq!(fit.h2, fit.vc.sigma_g / (fit.vc.sigma_g + fit.vc.sigma_e));
        assert!(fit.loglik_trace.windows(2).all(|w| w[1] - w[0] >= -1e-9));
    }
}
