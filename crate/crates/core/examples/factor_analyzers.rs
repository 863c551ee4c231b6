//! Mixture of factor analyzers on data generated from one, then on the
//! olive oil table.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use encinfo::data::{clustering_accuracy, load_olive_oil};
use encinfo::mixture::{cluster_assign, em_fit_mfa, EmConfig};

fn main() -> encinfo::Result<()> {
    // Two clusters in 6 dimensions, each a line plus small isotropic noise.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let (n, d) = (400, 6);
    let directions = [[1.0, 1.0, 0.0, 0.0, 1.0, 0.0], [0.0, 1.0, -1.0, 1.0, 0.0, 0.0]];
    let mut truth = Vec::with_capacity(n);
    let mut x = Mat::<f64>::zeros(n, d);
    for i in 0..n {
        let c = i % 2;
        let f = 2.0 * z();
        for j in 0..d {
            let offset = if c == 0 { -4.0 } else { 4.0 };
            x[(i, j)] = offset + f * directions[c][j] + 0.3 * z();
        }
        truth.push(c);
    }
    let model = em_fit_mfa(&x, 2, 1, &EmConfig::default())?;
    let labels = cluster_assign(&model, x.as_ref())?;
    println!("synthetic: accuracy {:.3}, log-likelihood {:.2}", clustering_accuracy(&labels, &truth)?, model.loglik());
    let factors = model.factors.as_ref().expect("factor-analytic model");
    for (c, (l, psi)) in factors.loadings.iter().zip(&factors.noise_diag).enumerate() {
        let col: Vec<String> = (0..d).map(|j| format!("{:+.2}", l[(j, 0)])).collect();
        let noise: Vec<String> = psi.iter().map(|v| format!("{v:.3}")).collect();
        println!("  component {c}: loading [{}]  noise [{}]", col.join(" "), noise.join(" "));
    }

    let olive = load_olive_oil(true)?;
    for q in 1..=3 {
        let model = em_fit_mfa(&olive.x, olive.n_classes, q, &EmConfig { seed: 1, ..Default::default() })?;
        let labels = cluster_assign(&model, olive.x.as_ref())?;
        println!(
            "olive, q = {q}: accuracy {:.3}, log-likelihood {:.1}, min step change {:.2e}",
            clustering_accuracy(&labels, &olive.labels)?,
            model.loglik(),
            model.diagnostics.min_loglik_change
        );
    }
    Ok(())
}
